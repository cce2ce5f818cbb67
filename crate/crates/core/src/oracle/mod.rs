//! Deterministic product quadrature over the two hidden-variable spheres.
//!
//! The oracle shares no code with the trial generators: it evaluates the
//! model integrals directly on a midpoint grid and is used to produce
//! reference values for the Monte Carlo engine.
//!
//! Every integrand has the form `Σ_{λ₁,λ₃} w² · 1[branch] · f(a·λ₁) · g(b·λ₄)`
//! with `λ₄ = -λ₃`. A single O(N²) pass over the grid reduces the sum over
//! `λ₁` into per-node moments of `λ₃` (branch mass, `Σλ₁`, `Σ|a·λ₁|`). Any
//! Bob setting is then evaluated from those moments in O(N).

pub mod fixture;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::BellOutcome;
use crate::scalar::Real;
use crate::sphere::UnitVec3;

/// Midpoint grid on the sphere: `n_z` equal-area bands in `z`, `n_phi`
/// equal azimuth steps, every node weighted `1/(n_z·n_phi)`.
///
/// `n_z` must be even and `n_phi` twice an odd number. The node set is then
/// mapped onto itself exactly (bit for bit) by negation and by each
/// coordinate π-rotation, no node lies on `z = 0`, and no two azimuths sum
/// to a right angle. The last property keeps the pairs where two Bell
/// branches tie (`x₁x₄ = ±y₁y₄`) off the grid; with a multiple of four they
/// would carry weight of order `1/n_phi` and bias the branch assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SphereGrid {
    n_z: usize,
    n_phi: usize,
}

impl SphereGrid {
    /// Default resolution for product integrals over both spheres.
    pub const DEFAULT_PRODUCT: usize = 202;

    pub fn new(n_z: usize, n_phi: usize) -> Result<Self> {
        if n_z < 2 || n_z % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_z = {n_z} must be even and ≥ 2")));
        }
        if n_phi < 2 || n_phi % 4 != 2 {
            return Err(Error::InvalidGrid(format!("n_phi = {n_phi} must be twice an odd number")));
        }
        Ok(Self { n_z, n_phi })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn default_product() -> Self {
        Self::square(Self::DEFAULT_PRODUCT).expect("valid default grid")
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.n_z * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight<T: Real>(&self) -> T {
        T::one() / T::from_count(self.len() as u64)
    }

    /// Valid grid with roughly half the spacing in both directions.
    pub fn refined(&self) -> Self {
        Self {
            n_z: 2 * self.n_z - 2,
            n_phi: 2 * self.n_phi - 2,
        }
    }

    /// Valid grid with roughly twice the spacing, if there is one.
    pub fn coarsened(&self) -> Option<Self> {
        // Nearest twice-odd number to n/2.
        let halve = |n: usize| {
            let m = (n + 2) / 4;
            2 * (m | 1)
        };
        Self::new(halve(self.n_z), halve(self.n_phi)).ok().filter(|g| g != self)
    }

    /// Node coordinates, band by band.
    pub fn nodes<T: Real>(&self) -> Vec<[T; 3]> {
        let half = self.n_z / 2;
        let dz = T::lit(2.0) / T::from_count(self.n_z as u64);
        let mut z = vec![T::zero(); self.n_z];
        for k in 0..half {
            let top = T::one() - (T::from_count(k as u64) + T::lit(0.5)) * dz;
            z[self.n_z - 1 - k] = top;
            z[k] = -top;
        }
        // Azimuths (j + ½)·2π/n_phi; the middle one of the upper half is π/2.
        let upper = self.n_phi / 2;
        let dphi = T::TAU() / T::from_count(self.n_phi as u64);
        let mut cs = vec![(T::zero(), T::zero()); self.n_phi];
        for j in 0..=upper / 2 {
            let phi = (T::from_count(j as u64) + T::lit(0.5)) * dphi;
            let (s, c) = if j == upper / 2 { (T::one(), T::zero()) } else { phi.sin_cos() };
            cs[j] = (c, s);
            cs[upper - 1 - j] = (-c, s);
        }
        for j in 0..upper {
            let (c, s) = cs[j];
            cs[self.n_phi - 1 - j] = (c, -s);
        }
        let mut out = Vec::with_capacity(self.len());
        for &zk in &z {
            let r = (T::one() - zk * zk).max(T::zero()).sqrt();
            for &(c, s) in &cs {
                out.push([r * c, r * s, zk]);
            }
        }
        out
    }
}

/// Largest chord from a node of band `k` to a point of its cell. The chord
/// is maximal at a corner because `λ·c` is concave in `z` along each cell
/// edge. Any linear functional `v·λ` with `|v| ≤ 1` varies by at most this
/// much across the cell.
fn band_reach<T: Real>(grid: &SphereGrid, k: usize) -> T {
    let dz = T::lit(2.0) / T::from_count(grid.n_z() as u64);
    let half_phi = T::PI() / T::from_count(grid.n_phi() as u64);
    let z_lo = -T::one() + T::from_count(k as u64) * dz;
    let zc = z_lo + T::lit(0.5) * dz;
    let rc = (T::one() - zc * zc).max(T::zero()).sqrt();
    let mut reach = T::zero();
    for z in [z_lo, z_lo + dz] {
        let r = (T::one() - z * z).max(T::zero()).sqrt();
        let dot = z * zc + r * rc * half_phi.cos();
        reach = reach.max((T::lit(2.0) * (T::one() - dot)).max(T::zero()).sqrt());
    }
    reach * T::lit(1.0 + 1e-9) + T::epsilon()
}

/// Per-node cell geometry for resolving region edges inside a cell.
struct CellGeometry<T> {
    /// `∂λ/∂z · Δz` and `∂λ/∂φ · Δφ`: the cell edges in the tangent plane.
    tangents: Vec<([T; 3], [T; 3])>,
    /// `band_reach` of each node's band.
    reach: Vec<T>,
}

impl<T: Real> CellGeometry<T> {
    fn new(grid: &SphereGrid) -> Self {
        let dz = T::lit(2.0) / T::from_count(grid.n_z() as u64);
        let dphi = T::TAU() / T::from_count(grid.n_phi() as u64);
        let tangents = grid
            .nodes::<T>()
            .into_iter()
            .map(|[x, y, z]| {
                let r2 = T::one() - z * z;
                (
                    [-z * x / r2 * dz, -z * y / r2 * dz, dz],
                    [-y * dphi, x * dphi, T::zero()],
                )
            })
            .collect();
        let reach = (0..grid.n_z())
            .flat_map(|k| std::iter::repeat(band_reach::<T>(grid, k)).take(grid.n_phi()))
            .collect();
        Self { tangents, reach }
    }

    /// Fraction of cell `i` where `x + v·(λ - λᵢ) ≥ 0`, with `v·(λ - λᵢ)`
    /// linearised in (z, φ). The cell is an exact rectangle of uniform
    /// measure in those coordinates.
    #[inline]
    fn fraction_above(&self, i: usize, x: T, v: &[T; 3]) -> T {
        let (tz, tp) = &self.tangents[i];
        rectangle_fraction_above(x, dot3(tz, v).abs(), dot3(tp, v).abs())
    }
}

#[inline]
fn dot3<T: Real>(u: &[T; 3], v: &[T; 3]) -> T {
    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        -T::one()
    }
}

/// Diagonal of `R_k` for ψ⁻ (identity), φ⁻ (x), φ⁺ (y), ψ⁺ (z).
const BRANCH_SIGNS: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Per-node moments of the first sphere, split by Bell branch.
///
/// For branch `k` and second-sphere node `j` (carrying `λ₃`, with Bob's
/// variable `λ₄ = -λ₃`) this stores, over first-sphere nodes `λ₁` in the
/// branch: the node count, `Σλ₁`, and `Σ|a·λ₁|` for each requested Alice
/// direction `a`.
#[derive(Clone, Debug)]
pub struct BranchMoments<T> {
    grid: SphereGrid,
    n_branches: usize,
    alice: Vec<[T; 3]>,
    lambda4: Vec<[T; 3]>,
    mass: Vec<T>,
    first: Vec<[T; 3]>,
    abs_proj: Vec<T>,
    pair_weight: T,
}

impl<T: Real> BranchMoments<T> {
    /// Runs the O(N²) pass. `prepare(λ₃)` precomputes whatever depends on
    /// the second sphere only; `classify(i, λ₁, prepared)` returns, per
    /// branch, the fraction of the cell of first-sphere node `i` assigned to
    /// it. The remainder is rejected.
    fn accumulate<P, G, F>(grid: &SphereGrid, n_branches: usize, alice: &[UnitVec3<T>], prepare: G, classify: F) -> Self
    where
        G: Fn(&[T; 3]) -> P + Sync,
        F: Fn(usize, &[T; 3], &P) -> [T; 4] + Sync,
    {
        let nodes = grid.nodes::<T>();
        let n = nodes.len();
        let dirs: Vec<[T; 3]> = alice.iter().map(UnitVec3::components).collect();
        let nd = dirs.len();
        let proj: Vec<T> = nodes
            .iter()
            .flat_map(|l1| dirs.iter().map(move |a| dot3(a, l1).abs()))
            .collect();
        let slots = n_branches;

        let per_node: Vec<(Vec<T>, Vec<[T; 3]>, Vec<T>)> = nodes
            .par_iter()
            .map(|l3| {
                let mut mass = vec![T::zero(); slots];
                let mut first = vec![[T::zero(); 3]; slots];
                let mut abs = vec![T::zero(); slots * nd];
                let prepared = prepare(l3);
                for (i, l1) in nodes.iter().enumerate() {
                    let weights = classify(i, l1, &prepared);
                    for (s, &w) in weights.iter().enumerate().take(n_branches) {
                        if w == T::zero() {
                            continue;
                        }
                        mass[s] = mass[s] + w;
                        let f = &mut first[s];
                        f[0] = f[0] + w * l1[0];
                        f[1] = f[1] + w * l1[1];
                        f[2] = f[2] + w * l1[2];
                        let p = &proj[i * nd..(i + 1) * nd];
                        let acc = &mut abs[s * nd..(s + 1) * nd];
                        for (x, &y) in acc.iter_mut().zip(p) {
                            *x = *x + w * y;
                        }
                    }
                }
                (mass, first, abs)
            })
            .collect();

        let mut mass = vec![T::zero(); n_branches * n];
        let mut first = vec![[T::zero(); 3]; n_branches * n];
        let mut abs_proj = vec![T::zero(); n_branches * nd * n];
        for (j, (m, f, a)) in per_node.into_iter().enumerate() {
            for k in 0..n_branches {
                mass[k * n + j] = m[k];
                first[k * n + j] = f[k];
                for d in 0..nd {
                    abs_proj[(k * nd + d) * n + j] = a[k * nd + d];
                }
            }
        }
        let w = grid.weight::<T>();
        Self {
            grid: *grid,
            n_branches,
            alice: dirs,
            lambda4: nodes.iter().map(|l3| [-l3[0], -l3[1], -l3[2]]).collect(),
            mass,
            first,
            abs_proj,
            pair_weight: w * w,
        }
    }

    fn n(&self) -> usize {
        self.lambda4.len()
    }

    pub fn n_branches(&self) -> usize {
        self.n_branches
    }

    pub fn alice_directions(&self) -> usize {
        self.alice.len()
    }

    /// Probability of the branch: `∫∫ 1[branch]`.
    pub fn branch_prob(&self, branch: usize) -> T {
        let n = self.n();
        self.mass[branch * n..(branch + 1) * n].iter().copied().sum::<T>() * self.pair_weight
    }

    /// Probability of the branch with Alice firing: `∫∫ 1[branch] |a·λ₁|`.
    pub fn coincidence_prob(&self, branch: usize, alice: usize) -> T {
        self.abs_slice(branch, alice).iter().copied().sum::<T>() * self.pair_weight
    }

    fn abs_slice(&self, branch: usize, alice: usize) -> &[T] {
        let n = self.n();
        let idx = branch * self.alice.len() + alice;
        &self.abs_proj[idx * n..(idx + 1) * n]
    }

    /// Cell average of `sign(b·λ₄)` for every node.
    ///
    /// Bob's factor is the only discontinuity left after the first-sphere
    /// reduction, and sampling it at the node alone costs a first-order
    /// error. Cells the great circle `b·λ = 0` cannot reach keep the node
    /// value; the others are averaged over a `BOB_SUBCELLS²` equal-area
    /// subgrid.
    fn bob_weights(&self, bob: &UnitVec3<T>) -> Vec<T> {
        const BOB_SUBCELLS: usize = 32;
        let b = bob.components();
        let (n_z, n_phi) = (self.grid.n_z(), self.grid.n_phi());
        let dz = T::lit(2.0) / T::from_count(n_z as u64);
        let dphi = T::TAU() / T::from_count(n_phi as u64);
        let sub = T::from_count(BOB_SUBCELLS as u64);
        let mut w = Vec::with_capacity(self.n());
        for k in 0..n_z {
            let z_lo = -T::one() + T::from_count(k as u64) * dz;
            let reach = band_reach::<T>(&self.grid, k);
            for l in 0..n_phi {
                let j = k * n_phi + l;
                let d = dot3(&b, &self.lambda4[j]);
                if d.abs() > reach {
                    w.push(sign(d));
                    continue;
                }
                let phi_lo = T::from_count(l as u64) * dphi;
                let mut acc = T::zero();
                for p in 0..BOB_SUBCELLS {
                    let z = z_lo + (T::from_count(p as u64) + T::lit(0.5)) * dz / sub;
                    let r = (T::one() - z * z).max(T::zero()).sqrt();
                    for q in 0..BOB_SUBCELLS {
                        let phi = phi_lo + (T::from_count(q as u64) + T::lit(0.5)) * dphi / sub;
                        let (sn, cs) = phi.sin_cos();
                        // λ₄ = -λ₃, so the sign flips.
                        let v = -(b[0] * r * cs + b[1] * r * sn + b[2] * z);
                        if v > T::zero() {
                            acc = acc + T::one();
                        } else if v < T::zero() {
                            acc = acc - T::one();
                        }
                    }
                }
                w.push(acc / (sub * sub));
            }
        }
        w
    }

    /// Sums `Σ|a·λ₁|` and `Σ a·λ₁` split by Bob's outcome (index 0 for +,
    /// 1 for -), with Bob's sign averaged over each cell.
    fn bob_sums(&self, branch: usize, alice: usize, bob: &UnitVec3<T>) -> ([T; 2], [T; 2]) {
        let n = self.n();
        let a = &self.alice[alice];
        let abs = self.abs_slice(branch, alice);
        let first = &self.first[branch * n..(branch + 1) * n];
        let w = self.bob_weights(bob);
        let half = T::lit(0.5);
        let mut abs_by_bob = [T::zero(); 2];
        let mut signed_by_bob = [T::zero(); 2];
        for j in 0..n {
            let s = dot3(a, &first[j]);
            let (plus, minus) = (half * (T::one() + w[j]), half * (T::one() - w[j]));
            abs_by_bob[0] = abs_by_bob[0] + plus * abs[j];
            abs_by_bob[1] = abs_by_bob[1] + minus * abs[j];
            signed_by_bob[0] = signed_by_bob[0] + plus * s;
            signed_by_bob[1] = signed_by_bob[1] + minus * s;
        }
        (abs_by_bob, signed_by_bob)
    }

    /// Conditional correlation `E(a, b)` over coincidences in the branch.
    pub fn correlation(&self, branch: usize, alice: usize, bob: &UnitVec3<T>) -> Option<T> {
        let (abs, signed) = self.bob_sums(branch, alice, bob);
        let den = abs[0] + abs[1];
        (den > T::zero()).then(|| (signed[0] - signed[1]) / den)
    }

    /// `(p₊₊, p₊₋, p₋₊, p₋₋)` over coincidences in the branch. Alice's weight
    /// for outcome `α` is `(|a·λ₁| + α a·λ₁)/2`.
    pub fn joint_probabilities(&self, branch: usize, alice: usize, bob: &UnitVec3<T>) -> Option<[T; 4]> {
        let (abs, signed) = self.bob_sums(branch, alice, bob);
        let den = abs[0] + abs[1];
        if den <= T::zero() {
            return None;
        }
        let half = T::lit(0.5);
        let p = |bob: usize, alice_sign: T| half * (abs[bob] + alice_sign * signed[bob]) / den;
        Some([p(0, T::one()), p(1, T::one()), p(0, -T::one()), p(1, -T::one())])
    }

    /// Sign of `a·R_k b` for branch `k` (1, -1, or 0 when not parallel).
    fn frame_sign(&self, branch: usize, alice: usize, bob: &UnitVec3<T>) -> T {
        let a = &self.alice[alice];
        let b = bob.components();
        let s = BRANCH_SIGNS[branch];
        let overlap = a[0] * T::lit(s[0]) * b[0] + a[1] * T::lit(s[1]) * b[1] + a[2] * T::lit(s[2]) * b[2];
        if (overlap.abs() - T::one()).abs() < T::lit(1e-9) {
            sign(overlap)
        } else {
            T::zero()
        }
    }
}

/// The three partial-swap integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSwapOracle<T> {
    /// `∫∫ θ(λ₁·λ₃ - (1 - η²/2))`.
    pub p_singlet: T,
    /// `∫∫ |a·λ₁| θ(λ₁·λ₃ - (1 - η²/2))`.
    pub p_full: T,
    /// Conditional `E(a, b)`.
    pub correlation: T,
}

/// Moments of the partial swap for the given Alice directions (single branch 0).
pub fn partial_swap_moments<T: Real>(eta: T, alice: &[UnitVec3<T>], grid: &SphereGrid) -> Result<BranchMoments<T>> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta.to_f64_lossy(),
            min: 0.0,
            max: 1.0,
        });
    }
    // At η = 0 the acceptance set λ₁·λ₃ ≥ 1 is the null diagonal, which the
    // grid would otherwise weight as 1/N.
    let cut = T::one() - eta * eta / T::lit(2.0);
    if eta == T::zero() {
        return Ok(BranchMoments::accumulate(grid, 1, alice, |_| (), |_, _, _| [T::zero(); 4]));
    }
    // The cap edge is resolved per cell rather than sampled at the node.
    let cells = CellGeometry::<T>::new(grid);
    Ok(BranchMoments::accumulate(grid, 1, alice, |l3| *l3, move |i, l1, l3| {
        let x = dot3(l1, l3) - cut;
        let w = if x.abs() > cells.reach[i] {
            if x > T::zero() { T::one() } else { T::zero() }
        } else {
            cells.fraction_above(i, x, l3)
        };
        [w, T::zero(), T::zero(), T::zero()]
    }))
}

/// Area of `{(u, v) ∈ [-½, ½]² : x + a·u + b·v ≥ 0}` for `a, b ≥ 0`.
fn rectangle_fraction_above<T: Real>(x: T, a: T, b: T) -> T {
    let (a, b) = if a >= b { (a, b) } else { (b, a) };
    let half = T::lit(0.5);
    if a == T::zero() {
        return if x > T::zero() { T::one() } else { T::zero() };
    }
    // CDF of a·U + b·V at -x, shifted so the support is [0, a + b].
    let s = -x + half * (a + b);
    let below = if s <= T::zero() {
        T::zero()
    } else if s >= a + b {
        T::one()
    } else if b == T::zero() {
        s / a
    } else if s <= b {
        s * s / (T::lit(2.0) * a * b)
    } else if s <= a {
        (s - half * b) / a
    } else {
        let t = a + b - s;
        T::one() - t * t / (T::lit(2.0) * a * b)
    };
    T::one() - below
}

pub fn oracle_partial_swap<T: Real>(
    eta: T,
    a: &UnitVec3<T>,
    b: &UnitVec3<T>,
    grid: &SphereGrid,
) -> Result<PartialSwapOracle<T>> {
    let m = partial_swap_moments(eta, &[*a], grid)?;
    Ok(PartialSwapOracle {
        p_singlet: m.branch_prob(0),
        p_full: m.coincidence_prob(0, 0),
        correlation: m.correlation(0, 0, b).unwrap_or_else(T::nan),
    })
}

/// `min_k λ₁·R_kλ₄`, clamped at -1, together with its branch (first minimum
/// wins). The clamp removes rounding on pairs where the bound is attained.
#[inline]
fn most_negative<T: Real>(l1: &[T; 3], l3: &[T; 3]) -> (T, usize) {
    // λ₄ = -λ₃
    let prod = [-(l1[0] * l3[0]), -(l1[1] * l3[1]), -(l1[2] * l3[2])];
    let mut best = T::infinity();
    let mut arg = 0;
    for (k, s) in BRANCH_SIGNS.iter().enumerate() {
        let v = T::lit(s[0]) * prod[0] + T::lit(s[1]) * prod[1] + T::lit(s[2]) * prod[2];
        if v < best {
            best = v;
            arg = k;
        }
    }
    (best.max(-T::one()), arg)
}

/// Moments of the complete swap (four branches, ψ⁻, φ⁻, φ⁺, ψ⁺).
pub fn complete_swap_moments<T: Real>(
    limit: T,
    alice: &[UnitVec3<T>],
    grid: &SphereGrid,
) -> Result<BranchMoments<T>> {
    if !(limit >= T::zero() && limit <= T::one()) {
        return Err(Error::OutOfRange {
            name: "limit",
            value: limit.to_f64_lossy(),
            min: 0.0,
            max: 1.0,
        });
    }
    let cells = CellGeometry::<T>::new(grid);
    Ok(BranchMoments::accumulate(grid, 4, alice, SwapFrames::new, move |i, l1, frames| {
        SwapPair::new(l1, frames).weights(&cells, i, limit)
    }))
}

/// `R_kλ₄` for the four branches, with `λ₄ = -λ₃`.
struct SwapFrames<T> {
    frame: [[T; 3]; 4],
}

impl<T: Real> SwapFrames<T> {
    #[inline]
    fn new(l3: &[T; 3]) -> Self {
        let frame = BRANCH_SIGNS.map(|s| [-T::lit(s[0]) * l3[0], -T::lit(s[1]) * l3[1], -T::lit(s[2]) * l3[2]]);
        Self { frame }
    }
}

/// The four branch products of one grid pair.
struct SwapPair<'a, T> {
    frame: &'a [[T; 3]; 4],
    /// `λ₁·R_kλ₄`.
    prod: [T; 4],
    /// Smallest product, clamped at -1.
    min: T,
    argmin: usize,
}

impl<'a, T: Real> SwapPair<'a, T> {
    #[inline(always)]
    fn new(l1: &[T; 3], frames: &'a SwapFrames<T>) -> Self {
        // frame[0] = λ₄, the others flip two of its components.
        let f = &frames.frame[0];
        let (u, v, w) = (l1[0] * f[0], l1[1] * f[1], l1[2] * f[2]);
        let prod = [u + v + w, u - v - w, v - u - w, w - u - v];
        let mut argmin = 0;
        for k in 1..4 {
            if prod[k] < prod[argmin] {
                argmin = k;
            }
        }
        Self {
            frame: &frames.frame,
            prod,
            min: prod[argmin].max(-T::one()),
            argmin,
        }
    }


    /// Fraction of cell `i` (around λ₁) accepted on each branch.
    ///
    /// Cells away from every edge are assigned whole. Otherwise the cell is
    /// shared among the branches that can be minimal somewhere in it, in
    /// proportion to the product of the fractions where each beats its
    /// competitors (renormalised, since the branches partition the cell),
    /// and each share is scaled by the fraction where the branch clears the
    /// limit. All products are linearised across the cell.
    #[inline]
    fn weights(&self, cells: &CellGeometry<T>, i: usize, limit: T) -> [T; 4] {
        let mut w = [T::zero(); 4];
        let r = cells.reach[i];
        if limit >= T::one() || -self.min - limit < -r {
            return w;
        }
        let two_r = r + r;
        let lo = self.prod[self.argmin];
        let candidate = self.prod.map(|p| p - lo < two_r);
        let n_candidates = candidate.iter().filter(|&&c| c).count();
        if n_candidates == 1 {
            w[self.argmin] = T::one();
        } else {
            let mut total = T::zero();
            for k in (0..4).filter(|&k| candidate[k]) {
                let mut f = T::one();
                for j in (0..4).filter(|&j| j != k && candidate[j]) {
                    let dv = [
                        self.frame[j][0] - self.frame[k][0],
                        self.frame[j][1] - self.frame[k][1],
                        self.frame[j][2] - self.frame[k][2],
                    ];
                    f = f * cells.fraction_above(i, self.prod[j] - self.prod[k], &dv);
                }
                w[k] = f;
                total = total + f;
            }
            if total > T::zero() {
                w.iter_mut().for_each(|x| *x = *x / total);
            } else {
                w = [T::zero(); 4];
                w[self.argmin] = T::one();
            }
        }
        // The depth -min_k λ₁·R_kλ₄ is positive almost everywhere, so at
        // limit 0 the whole cell is accepted; it is not linear near its
        // zeros, which the edge fraction below would get wrong.
        if limit <= T::zero() || -self.min - limit > r {
            return w;
        }
        for k in 0..4 {
            if w[k] == T::zero() {
                continue;
            }
            let accept = (-self.prod[k]).min(T::one()) - limit;
            if accept < -r {
                w[k] = T::zero();
            } else if accept <= r {
                let neg = self.frame[k].map(|c| -c);
                w[k] = w[k] * cells.fraction_above(i, accept, &neg);
            }
        }
        w
    }
}

/// Grid mass of `{min_k λ₁·R_kλ₄ < -limit}` at each limit, with the same
/// in-cell edge treatment as [`complete_swap_moments`].
pub fn oracle_bell_result_curve<T: Real>(limits: &[T], grid: &SphereGrid) -> Vec<T> {
    let nodes = grid.nodes::<T>();
    let cells = CellGeometry::<T>::new(grid);
    let sums = nodes
        .par_iter()
        .map(|l3| {
            let mut c = vec![T::zero(); limits.len()];
            let frames = SwapFrames::new(l3);
            for (i, l1) in nodes.iter().enumerate() {
                let pair = SwapPair::new(l1, &frames);
                let r = cells.reach[i];
                for (ci, &l) in c.iter_mut().zip(limits) {
                    let depth = -pair.min - l;
                    if l >= T::one() || depth < -r {
                        continue;
                    }
                    if depth > r || l <= T::zero() {
                        *ci = *ci + T::one();
                    } else {
                        *ci = *ci + pair.weights(&cells, i, l).into_iter().sum::<T>();
                    }
                }
            }
            c
        })
        .collect::<Vec<_>>();
    let mut total = vec![T::zero(); limits.len()];
    for c in sums {
        total.iter_mut().zip(c).for_each(|(t, x)| *t = *t + x);
    }
    let w = grid.weight::<T>();
    total.into_iter().map(|t| t * w * w).collect()
}

pub fn oracle_bell_result_prob<T: Real>(limit: T, grid: &SphereGrid) -> T {
    oracle_bell_result_curve(&[limit], grid)[0]
}

/// Histogram of the acceptance depth `d = -min_k λ₁·R_kλ₄` on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct DepthHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl DepthHistogram {
    pub fn compute(grid: &SphereGrid, n_bins: usize) -> Self {
        let nodes = grid.nodes::<f64>();
        let nb = n_bins as f64;
        let counts = nodes
            .par_iter()
            .map(|l3| {
                let mut c = vec![0u64; n_bins];
                for l1 in &nodes {
                    let d = -most_negative(l1, l3).0;
                    let bin = ((d * nb) as usize).min(n_bins - 1);
                    c[bin] += 1;
                }
                c
            })
            .reduce(
                || vec![0u64; n_bins],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let total = (nodes.len() as u64) * (nodes.len() as u64);
        Self { counts, total }
    }

    /// Approximate `P(d > limit)`, exact at bin edges.
    pub fn tail(&self, limit: f64) -> f64 {
        let nb = self.counts.len() as f64;
        let pos = (limit * nb).clamp(0.0, nb);
        let b = pos.floor() as usize;
        let above: u64 = self.counts.iter().skip(b + 1).sum();
        let partial = if b < self.counts.len() {
            self.counts[b] as f64 * (1.0 - (pos - b as f64))
        } else {
            0.0
        };
        (above as f64 + partial) / self.total as f64
    }

    /// Limit at which the result probability falls to `target`, by bisection
    /// on the interpolated tail.
    pub fn limit_for(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Conditional `E(a, b)` of the complete swap on one Bell branch.
pub fn oracle_complete_swap_correlation<T: Real>(
    limit: T,
    outcome: BellOutcome,
    a: &UnitVec3<T>,
    b: &UnitVec3<T>,
    grid: &SphereGrid,
) -> Result<T> {
    let k = outcome.result_index().ok_or(Error::NoResultOutcome)?;
    let m = complete_swap_moments(limit, &[*a], grid)?;
    m.correlation(k, 0, b).ok_or(Error::EmptyBranch { outcome })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityOracle<T> {
    pub fidelity: T,
    pub visibility: T,
    pub p_result: T,
}

/// Werner fidelity `(1 + 3V)/4` of the complete swap, with `V` read from
/// parallel analyzers along x, y and z, folded into the ψ⁻ frame and pooled
/// over the four branches (the same estimator the Monte Carlo runner uses).
pub fn oracle_fidelity<T: Real>(limit: T, grid: &SphereGrid) -> Result<FidelityOracle<T>> {
    let axes = [UnitVec3::unit_x(), UnitVec3::unit_y(), UnitVec3::unit_z()];
    let m = complete_swap_moments(limit, &axes, grid)?;
    fidelity_from_moments(&m, &axes)
}

/// Fidelity from moments computed with Alice directions `axes` (each used
/// as its own Bob direction).
pub fn fidelity_from_moments<T: Real>(m: &BranchMoments<T>, axes: &[UnitVec3<T>]) -> Result<FidelityOracle<T>> {
    if m.n_branches() != 4 || axes.len() != m.alice_directions() {
        return Err(Error::EmptyInput("fidelity needs complete-swap moments for every axis"));
    }
    let mut v = T::zero();
    for (d, axis) in axes.iter().enumerate() {
        let mut num = T::zero();
        let mut den = T::zero();
        for k in 0..4 {
            let (abs, signed) = m.bob_sums(k, d, axis);
            let s = m.frame_sign(k, d, axis);
            if s == T::zero() {
                return Err(Error::NotParallel {
                    setting_id: d,
                    outcome: BellOutcome::RESULTS[k],
                    overlap: 0.0,
                });
            }
            num = num + s * (signed[0] - signed[1]);
            den = den + abs[0] + abs[1];
        }
        if den <= T::zero() {
            return Err(Error::EmptyBranch {
                outcome: BellOutcome::PsiMinus,
            });
        }
        v = v - num / den;
    }
    let v = v / T::from_count(axes.len() as u64);
    let p_result = (0..4).map(|k| m.branch_prob(k)).sum();
    Ok(FidelityOracle {
        fidelity: (T::one() + T::lit(3.0) * v) / T::lit(4.0),
        visibility: v,
        p_result,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::AxisRotation;

    fn grid(n: usize) -> SphereGrid {
        SphereGrid::square(n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(SphereGrid::new(3, 6).is_err());
        assert!(SphereGrid::new(4, 8).is_err());
        assert!(SphereGrid::new(0, 0).is_err());
        assert_eq!(grid(10).coarsened(), Some(grid(6)));
        assert_eq!(grid(202).coarsened(), Some(grid(102)));
        assert_eq!(grid(102).refined(), grid(202));
        assert_eq!(grid(2).coarsened(), None);
        for n in [10, 14, 26, 50, 98] {
            let g = grid(n);
            assert_eq!(SphereGrid::new(g.n_z(), g.n_phi()).unwrap(), g);
            let c = g.coarsened().unwrap();
            assert!(SphereGrid::new(c.n_z(), c.n_phi()).is_ok());
        }
    }

    #[test]
    fn grid_weights_and_norms() {
        let g = SphereGrid::new(40, 38).unwrap();
        let nodes = g.nodes::<f64>();
        assert_eq!(nodes.len(), g.len());
        let total: f64 = nodes.iter().map(|_| g.weight::<f64>()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for v in &nodes {
            assert!((dot3(v, v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_closed_under_pi_rotations() {
        let g = SphereGrid::new(12, 18).unwrap();
        let nodes = g.nodes::<f64>();
        let contains = |p: [f64; 3]| nodes.iter().any(|q| *q == p);
        assert!(nodes.iter().all(|v| v[2] != 0.0));
        for v in &nodes {
            for s in BRANCH_SIGNS {
                assert!(contains([s[0] * v[0], s[1] * v[1], s[2] * v[2]]));
            }
            assert!(contains([-v[0], -v[1], -v[2]]));
        }
    }

    #[test]
    fn partial_swap_zero_eta_is_exactly_zero() {
        let a = UnitVec3::unit_z();
        let o = oracle_partial_swap(0.0, &a, &a, &grid(22)).unwrap();
        assert_eq!(o.p_singlet, 0.0);
        assert_eq!(o.p_full, 0.0);
    }

    #[test]
    fn partial_swap_coarse_grid_close_to_closed_form() {
        let a = UnitVec3::new(0.3f64, -0.4, 0.8).unwrap();
        let o = oracle_partial_swap(1.0, &a, &a, &grid(42)).unwrap();
        assert!((o.p_singlet - 0.25).abs() < 5e-3, "{o:?}");
        assert!((o.p_full - 0.125).abs() < 5e-3, "{o:?}");
        assert!((o.correlation + 0.75).abs() < 2e-2, "{o:?}");
    }

    #[test]
    fn rectangle_fraction_matches_subsampling() {
        let cases = [(0.1, 0.7, 0.3), (-0.2, 0.5, 0.5), (0.0, 1.0, 0.0), (0.05, 0.2, 0.9), (-0.6, 0.3, 0.4)];
        for (x, a, b) in cases {
            let n = 400;
            let mut inside = 0;
            for i in 0..n {
                for j in 0..n {
                    let u = (i as f64 + 0.5) / n as f64 - 0.5;
                    let v = (j as f64 + 0.5) / n as f64 - 0.5;
                    inside += (x + a * u + b * v >= 0.0) as usize;
                }
            }
            let f = rectangle_fraction_above(x, a, b);
            assert!((f - inside as f64 / (n * n) as f64).abs() < 5e-3, "{x} {a} {b}: {f}");
        }
        assert_eq!(rectangle_fraction_above(1.0, 0.5, 0.5), 1.0);
        assert_eq!(rectangle_fraction_above(-1.0, 0.5, 0.5), 0.0);
    }

    #[test]
    fn result_prob_endpoints() {
        let g = grid(26);
        assert!((oracle_bell_result_prob(0.0f64, &g) - 1.0).abs() < 1e-12);
        assert_eq!(oracle_bell_result_prob(1.0, &g), 0.0);
    }

    #[test]
    fn result_prob_is_non_increasing() {
        let limits: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let curve = oracle_bell_result_curve(&limits, &grid(26));
        for w in curve.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn histogram_tracks_curve() {
        let g = grid(18);
        let h = DepthHistogram::compute(&g, 100);
        let edges = [0.23, 0.51, 0.77];
        let exact = oracle_bell_result_curve(&edges, &g);
        // The histogram bins node values; the curve resolves edges inside
        // cells, so they agree to grid accuracy only.
        for (l, e) in edges.iter().zip(exact) {
            assert!((h.tail(*l) - e).abs() < 2e-2, "{l}: {} vs {e}", h.tail(*l));
        }
        let l = h.limit_for(0.5);
        assert!((h.tail(l) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn branch_symmetry_is_exact_on_the_grid() {
        let g = grid(26);
        let a = UnitVec3::new(0.2f64, 0.5, -0.7).unwrap();
        let b = UnitVec3::new(-0.6, 0.1, 0.4).unwrap();
        let m = complete_swap_moments(0.3, &[a], &g).unwrap();
        let pairs = [
            (BellOutcome::PhiMinus, AxisRotation::X),
            (BellOutcome::PhiPlus, AxisRotation::Y),
            (BellOutcome::PsiPlus, AxisRotation::Z),
        ];
        for (o, r) in pairs {
            let lhs = m.correlation(o.result_index().unwrap(), 0, &b).unwrap();
            let rhs = m.correlation(0, 0, &r.rotate_pi(b)).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{o}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn joint_probabilities_are_consistent() {
        let g = grid(18);
        let a = UnitVec3::new(0.2, 0.5, -0.7).unwrap();
        let b = UnitVec3::new(-0.6, 0.1, 0.4).unwrap();
        let m = complete_swap_moments(0.2, &[a], &g).unwrap();
        for k in 0..4 {
            let p = m.joint_probabilities(k, 0, &b).unwrap();
            let e = m.correlation(k, 0, &b).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p[0] + p[3] - p[1] - p[2] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn no_result_outcome_rejected() {
        let z = UnitVec3::unit_z();
        assert!(matches!(
            oracle_complete_swap_correlation(0.0, BellOutcome::NoResult, &z, &z, &grid(10)),
            Err(Error::NoResultOutcome)
        ));
        assert!(matches!(
            oracle_complete_swap_correlation(1.0, BellOutcome::PsiMinus, &z, &z, &grid(10)),
            Err(Error::EmptyBranch { .. })
        ));
    }

    #[test]
    fn fidelity_near_one_at_high_limit() {
        let f = oracle_fidelity(0.99f64, &grid(62)).unwrap();
        assert!((f.fidelity - 1.0).abs() < 0.02, "{f:?}");
        assert!(f.p_result > 0.0 && f.p_result < 0.05);
    }
}
