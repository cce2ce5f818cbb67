//! Frozen oracle reference values.
//!
//! Plain text, one record per line: `key<TAB>value<TAB>error_bound`. Lines
//! starting with `#` are comments. The error bound is the change in the value
//! when the grid spacing is doubled, which bounds the error of the finer grid
//! under first-order convergence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimators::fit_sinusoid;
use crate::models::BellOutcome;
use crate::settings::{AnglePair, SweepPlane};
use crate::sphere::UnitVec3;

use super::{complete_swap_moments, fidelity_from_moments, oracle_bell_result_curve, DepthHistogram, SphereGrid};

/// Limits of the result-probability curve.
pub const SWEEP_LIMITS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Limits of the fidelity curve.
pub const FIDELITY_LIMITS: [f64; 12] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];

/// The reference values shipped with the crate.
const REFERENCE_TEXT: &str = include_str!("../../fixtures/oracle_reference.tsv");

/// Parses the shipped reference values.
pub fn reference() -> Result<Fixture> {
    Fixture::parse(REFERENCE_TEXT)
}

/// Histogram resolution used to invert the result-probability curve.
const DEPTH_BINS: usize = 20_000;

/// One angle-sweep figure: Bell efficiency target and analyzer geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepFigure {
    pub figure: u8,
    pub target_result_prob: f64,
    pub alice: AnglePair,
    pub plane: SweepPlane,
    pub step_deg: f64,
}

impl SweepFigure {
    pub fn angles_deg(&self) -> Vec<f64> {
        let n = (360.0 / self.step_deg).round() as usize;
        (0..n).map(|i| i as f64 * self.step_deg).collect()
    }
}

/// Figure 4 runs at ≈50% Bell efficiency with Alice along x and Bob in the
/// xy-plane; figure 5 at ≈90% with Alice along z and Bob in the xz-plane.
pub const SWEEP_FIGURES: [SweepFigure; 2] = [
    SweepFigure {
        figure: 4,
        target_result_prob: 0.5,
        alice: AnglePair(90.0, 0.0),
        plane: SweepPlane::Xy,
        step_deg: 5.0,
    },
    SweepFigure {
        figure: 5,
        target_result_prob: 0.9,
        alice: AnglePair(0.0, 0.0),
        plane: SweepPlane::Xz,
        step_deg: 5.0,
    },
];

/// Curves stored per figure, outcome and angle.
pub const SWEEP_QUANTITIES: [&str; 5] = ["E", "p_pp", "p_pm", "p_mp", "p_mm"];

pub mod keys {
    use crate::models::BellOutcome;

    pub fn result_prob(limit: f64) -> String {
        format!("bell_result_prob/limit={limit:.4}")
    }

    pub fn limit_for_result_prob(target: f64) -> String {
        format!("limit_for_result_prob/target={target:.2}")
    }

    pub fn fidelity(limit: f64) -> String {
        format!("fidelity/limit={limit:.4}")
    }

    pub fn fidelity_p_result(limit: f64) -> String {
        format!("fidelity_p_result/limit={limit:.4}")
    }

    pub fn complete_corr(limit: f64, outcome: BellOutcome, alice: &str, bob: &str) -> String {
        format!("complete_swap_corr/limit={limit:.4}/outcome={outcome}/alice={alice}/bob={bob}")
    }

    pub fn sweep_limit(figure: u8) -> String {
        format!("angle_sweep/fig={figure}/limit")
    }

    pub fn sweep_point(figure: u8, outcome: BellOutcome, angle_deg: f64, quantity: &str) -> String {
        format!("angle_sweep/fig={figure}/outcome={outcome}/angle={angle_deg}/{quantity}")
    }

    pub fn sweep_fit(figure: u8, outcome: BellOutcome, param: &str) -> String {
        format!("angle_sweep_fit/fig={figure}/outcome={outcome}/{param}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureRecord {
    pub key: String,
    pub value: f64,
    pub error_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fixture {
    comments: Vec<String>,
    records: Vec<FixtureRecord>,
    index: HashMap<String, usize>,
}

impl Fixture {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_comment(&mut self, c: impl Into<String>) {
        self.comments.push(c.into());
    }

    pub fn insert(&mut self, key: impl Into<String>, value: f64, error_bound: f64) {
        let key = key.into();
        let rec = FixtureRecord {
            key: key.clone(),
            value,
            error_bound,
        };
        match self.index.get(&key) {
            Some(&i) => self.records[i] = rec,
            None => {
                self.index.insert(key, self.records.len());
                self.records.push(rec);
            }
        }
    }

    pub fn get(&self, key: &str) -> Result<&FixtureRecord> {
        self.index
            .get(key)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::Fixture(format!("missing key `{key}`")))
    }

    pub fn value(&self, key: &str) -> Result<f64> {
        self.get(key).map(|r| r.value)
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut f = Fixture::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                f.add_comment(c.trim_start());
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [key, value, err] = fields.as_slice() else {
                return Err(Error::Fixture(format!("line {}: expected 3 tab-separated fields", n + 1)));
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Fixture(format!("line {}: `{s}` is not a number", n + 1)))
            };
            f.insert(*key, num(value)?, num(err)?);
        }
        Ok(f)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        for r in &self.records {
            let _ = writeln!(out, "{}\t{}\t{}", r.key, r.value, r.error_bound);
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Rounds a limit so it prints exactly with four decimals.
fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Regenerates every reference value at `grid`, with error bounds taken
/// from the grid of twice the spacing. `progress` receives a short label
/// before each quadrature pass.
pub fn generate(grid: &SphereGrid, mut progress: impl FnMut(&str)) -> Result<Fixture> {
    let coarse = grid
        .coarsened()
        .ok_or_else(|| Error::InvalidGrid("fixture grid must admit a coarser reference".into()))?;
    let mut f = Fixture::new();
    f.add_comment("oracle reference values: key<TAB>value<TAB>error_bound");
    f.add_comment(format!(
        "grid n_z={} n_phi={}; error bound = |value - value at n_z={} n_phi={}|",
        grid.n_z(),
        grid.n_phi(),
        coarse.n_z(),
        coarse.n_phi()
    ));

    progress("acceptance-depth histogram");
    let hist = DepthHistogram::compute(grid, DEPTH_BINS);
    let mut figure_limits = Vec::new();
    for fig in &SWEEP_FIGURES {
        let limit = round4(hist.limit_for(fig.target_result_prob));
        f.insert(keys::limit_for_result_prob(fig.target_result_prob), limit, 5e-5);
        f.insert(keys::sweep_limit(fig.figure), limit, 5e-5);
        figure_limits.push(limit);
    }

    progress("result probability curve");
    let mut limits: Vec<f64> = SWEEP_LIMITS.to_vec();
    limits.extend(&figure_limits);
    let fine = oracle_bell_result_curve(&limits, grid);
    let rough = oracle_bell_result_curve(&limits, &coarse);
    for ((l, v), r) in limits.iter().zip(&fine).zip(&rough) {
        f.insert(keys::result_prob(*l), *v, (v - r).abs());
    }

    let axes = [UnitVec3::unit_x(), UnitVec3::unit_y(), UnitVec3::unit_z()];
    for &limit in &FIDELITY_LIMITS {
        progress(&format!("fidelity at limit {limit}"));
        let mf = complete_swap_moments(limit, &axes, grid)?;
        let mc = complete_swap_moments(limit, &axes, &coarse)?;
        let (ff, fc) = (fidelity_from_moments(&mf, &axes)?, fidelity_from_moments(&mc, &axes)?);
        f.insert(keys::fidelity(limit), ff.fidelity, (ff.fidelity - fc.fidelity).abs());
        f.insert(keys::fidelity_p_result(limit), ff.p_result, (ff.p_result - fc.p_result).abs());
        if limit == 0.0 {
            let z = UnitVec3::unit_z();
            for outcome in BellOutcome::RESULTS {
                let k = outcome.result_index().expect("result outcome");
                let (Some(e), Some(r)) = (mf.correlation(k, 2, &z), mc.correlation(k, 2, &z)) else {
                    return Err(Error::EmptyBranch { outcome });
                };
                f.insert(keys::complete_corr(limit, outcome, "z", "z"), e, (e - r).abs());
            }
        }
    }

    for (fig, &limit) in SWEEP_FIGURES.iter().zip(&figure_limits) {
        progress(&format!("angle sweep, figure {}", fig.figure));
        let alice = [fig.alice.direction()];
        let mf = complete_swap_moments(limit, &alice, grid)?;
        let mc = complete_swap_moments(limit, &alice, &coarse)?;
        for outcome in BellOutcome::RESULTS {
            let k = outcome.result_index().expect("result outcome");
            let mut curve_f = Vec::new();
            let mut curve_c = Vec::new();
            for angle in fig.angles_deg() {
                let b = fig.plane.direction(angle);
                let (Some(jf), Some(jc)) = (mf.joint_probabilities(k, 0, &b), mc.joint_probabilities(k, 0, &b)) else {
                    return Err(Error::EmptyBranch { outcome });
                };
                let ef = jf[0] + jf[3] - jf[1] - jf[2];
                let ec = jc[0] + jc[3] - jc[1] - jc[2];
                let values = [(ef, ec), (jf[0], jc[0]), (jf[1], jc[1]), (jf[2], jc[2]), (jf[3], jc[3])];
                for (q, (vf, vc)) in SWEEP_QUANTITIES.iter().zip(values) {
                    f.insert(keys::sweep_point(fig.figure, outcome, angle, q), vf, (vf - vc).abs());
                }
                curve_f.push((angle.to_radians(), ef));
                curve_c.push((angle.to_radians(), ec));
            }
            let (sf, sc) = (fit_sinusoid(&curve_f)?, fit_sinusoid(&curve_c)?);
            let params = [
                ("c_offset", sf.c_offset, sc.c_offset),
                ("a_cos", sf.a_cos, sc.a_cos),
                ("b_sin", sf.b_sin, sc.b_sin),
                ("amplitude", sf.amplitude, sc.amplitude),
                ("rms_residual", sf.rms_residual, sc.rms_residual),
            ];
            for (name, vf, vc) in params {
                f.insert(keys::sweep_fit(fig.figure, outcome, name), vf, (vf - vc).abs());
            }
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut f = Fixture::new();
        f.add_comment("hello");
        f.insert("a/b=1", 0.1 + 0.2, 1e-17);
        f.insert("c", -3.5, 0.0);
        let g = Fixture::parse(&f.to_text()).unwrap();
        assert_eq!(f, g);
        assert_eq!(g.value("a/b=1").unwrap(), 0.1 + 0.2);
        assert!(g.get("missing").is_err());
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(Fixture::parse("k\t1\n").is_err());
        assert!(Fixture::parse("k\tx\t1\n").is_err());
    }

    #[test]
    fn key_formats() {
        assert_eq!(keys::result_prob(0.5), "bell_result_prob/limit=0.5000");
        assert_eq!(
            keys::sweep_point(4, BellOutcome::PhiPlus, 35.0, "E"),
            "angle_sweep/fig=4/outcome=phi_plus/angle=35/E"
        );
    }

    #[test]
    fn generate_on_tiny_grid() {
        let f = generate(&SphereGrid::square(18).unwrap(), |_| {}).unwrap();
        assert!((f.value(&keys::result_prob(0.0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(f.value(&keys::result_prob(1.0)).unwrap(), 0.0);
        let l50 = f.value(&keys::sweep_limit(4)).unwrap();
        assert!(l50 > 0.0 && l50 < 1.0);
        assert!(f.get(&keys::sweep_fit(5, BellOutcome::PsiPlus, "amplitude")).is_ok());
    }
}
