//! First-harmonic least squares, `y ≈ C + A cos θ + B sin θ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit<T> {
    pub c_offset: T,
    pub a_cos: T,
    pub b_sin: T,
    /// `√(A² + B²)`.
    pub amplitude: T,
    /// `atan2(B, A)`, so the model reads `C + amplitude·cos(θ - phase)`.
    pub phase: T,
    pub rms_residual: T,
    pub n_samples: usize,
}

/// One-sigma uncertainties of the fitted quantities, propagated from
/// independent per-point errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFitErrors<T> {
    pub c_offset: T,
    pub a_cos: T,
    pub b_sin: T,
    pub amplitude: T,
    pub phase: T,
}

type Mat3<T> = [[T; 3]; 3];

#[inline]
fn design_row<T: Real>(theta: T) -> [T; 3] {
    let (s, c) = theta.sin_cos();
    [T::one(), c, s]
}

/// Solves `m x = rhs` by Gaussian elimination with partial pivoting.
fn solve3<T: Real>(mut m: Mat3<T>, mut rhs: [T; 3]) -> Result<[T; 3]> {
    let scale = (0..3).map(|i| m[i][i].abs()).fold(T::zero(), T::max);
    let tol = scale * T::epsilon() * T::lit(1e3);
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if !(m[pivot][col].abs() > tol) {
            return Err(Error::RankDeficient("singular normal equations".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] = m[row][k] - f * m[col][k];
            }
            rhs[row] = rhs[row] - f * rhs[col];
        }
    }
    let mut x = [T::zero(); 3];
    for row in (0..3).rev() {
        let tail: T = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}

fn normal_matrix<T: Real>(samples: &[(T, T)]) -> Mat3<T> {
    let mut m = [[T::zero(); 3]; 3];
    for &(theta, _) in samples {
        let r = design_row(theta);
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = m[i][j] + r[i] * r[j];
            }
        }
    }
    m
}

fn distinct_angles<T: Real>(samples: &[(T, T)]) -> usize {
    let tau = T::TAU();
    let mut reduced: Vec<T> = samples
        .iter()
        .map(|&(t, _)| {
            let r = t % tau;
            if r < T::zero() { r + tau } else { r }
        })
        .collect();
    reduced.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps = T::lit(1e-9);
    let mut count = 0;
    for (i, &r) in reduced.iter().enumerate() {
        if i == 0 || r - reduced[i - 1] > eps {
            count += 1;
        }
    }
    // 0 and 2π are the same angle.
    if count > 1 && reduced[0] + tau - reduced[reduced.len() - 1] <= eps {
        count -= 1;
    }
    count
}

/// Least-squares fit of `y ≈ C + A cos θ + B sin θ` through the 3×3 normal
/// equations. Angles are in radians.
pub fn fit_sinusoid<T: Real>(samples: &[(T, T)]) -> Result<SinusoidFit<T>> {
    if samples.len() < 3 {
        return Err(Error::RankDeficient(format!("{} samples, need at least 3", samples.len())));
    }
    let distinct = distinct_angles(samples);
    if distinct < 3 {
        return Err(Error::RankDeficient(format!("{distinct} distinct angles, need at least 3")));
    }
    if samples.iter().any(|&(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::RankDeficient("non-finite sample".into()));
    }
    let m = normal_matrix(samples);
    let mut rhs = [T::zero(); 3];
    for &(theta, y) in samples {
        let r = design_row(theta);
        for i in 0..3 {
            rhs[i] = rhs[i] + r[i] * y;
        }
    }
    let [c, a, b] = solve3(m, rhs)?;
    let sse: T = samples
        .iter()
        .map(|&(theta, y)| {
            let r = design_row(theta);
            let d = y - (c + a * r[1] + b * r[2]);
            d * d
        })
        .sum();
    Ok(SinusoidFit {
        c_offset: c,
        a_cos: a,
        b_sin: b,
        amplitude: a.hypot(b),
        phase: b.atan2(a),
        rms_residual: (sse / T::from_count(samples.len() as u64)).sqrt(),
        n_samples: samples.len(),
    })
}

impl<T: Real> SinusoidFit<T> {
    pub fn eval(&self, theta: T) -> T {
        let (s, c) = theta.sin_cos();
        self.c_offset + self.a_cos * c + self.b_sin * s
    }

    /// `y - fit(θ)` for each sample.
    pub fn residuals(&self, samples: &[(T, T)]) -> Vec<T> {
        samples.iter().map(|&(t, y)| y - self.eval(t)).collect()
    }

    /// Propagates independent per-point standard errors `sigmas` through the
    /// unweighted least-squares solution, `Cov = (XᵀX)⁻¹ Xᵀ Σ X (XᵀX)⁻¹`,
    /// then to amplitude and phase to first order.
    pub fn errors(&self, samples: &[(T, T)], sigmas: &[T]) -> Result<SinusoidFitErrors<T>> {
        if samples.len() != sigmas.len() {
            return Err(Error::EmptyInput("one sigma per sample required"));
        }
        let m = normal_matrix(samples);
        let mut inv = [[T::zero(); 3]; 3];
        for (j, e) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].iter().enumerate() {
            let col = solve3(m, e.map(T::lit))?;
            for i in 0..3 {
                inv[i][j] = col[i];
            }
        }
        let mut meat = [[T::zero(); 3]; 3];
        for (&(theta, _), &s) in samples.iter().zip(sigmas) {
            let r = design_row(theta);
            for i in 0..3 {
                for j in 0..3 {
                    meat[i][j] = meat[i][j] + r[i] * r[j] * s * s;
                }
            }
        }
        let mul = |x: &Mat3<T>, y: &Mat3<T>| {
            let mut out = [[T::zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    out[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
                }
            }
            out
        };
        let cov = mul(&mul(&inv, &meat), &inv);
        let (a, b) = (self.a_cos, self.b_sin);
        let r2 = a * a + b * b;
        let (amp_var, phase_var) = if r2 > T::zero() {
            let amp = r2.sqrt();
            let (va, vb, cab) = (cov[1][1], cov[2][2], cov[1][2]);
            let two = T::lit(2.0);
            (
                (a * a * va + b * b * vb + two * a * b * cab) / (amp * amp),
                (b * b * va + a * a * vb - two * a * b * cab) / (r2 * r2),
            )
        } else {
            (cov[1][1].max(cov[2][2]), T::infinity())
        };
        Ok(SinusoidFitErrors {
            c_offset: cov[0][0].sqrt(),
            a_cos: cov[1][1].sqrt(),
            b_sin: cov[2][2].sqrt(),
            amplitude: amp_var.max(T::zero()).sqrt(),
            phase: phase_var.max(T::zero()).sqrt(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn octagon(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (0..8).map(|k| k as f64 * PI / 4.0).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn pure_cosine() {
        let fit = fit_sinusoid(&octagon(f64::cos)).unwrap();
        assert!(fit.c_offset.abs() < 1e-10);
        assert!((fit.a_cos - 1.0).abs() < 1e-10);
        assert!(fit.b_sin.abs() < 1e-10);
        assert!(fit.rms_residual < 1e-10);
        assert!(fit.phase.abs() < 1e-10);
    }

    #[test]
    fn constant() {
        let fit = fit_sinusoid(&octagon(|_| 0.3)).unwrap();
        assert!((fit.c_offset - 0.3).abs() < 1e-12);
        assert!(fit.amplitude < 1e-12);
    }

    #[test]
    fn rank_deficient_inputs() {
        assert!(matches!(fit_sinusoid(&[(0.0, 1.0), (1.0, 2.0)]), Err(Error::RankDeficient(_))));
        let two_angles = [(0.0, 1.0), (1.0, 2.0), (0.0, 1.5), (1.0 + 2.0 * PI, 2.0)];
        assert!(matches!(fit_sinusoid(&two_angles), Err(Error::RankDeficient(_))));
        let wrapped = [(0.0, 1.0), (2.0 * PI, 1.0), (PI, 0.0)];
        assert!(fit_sinusoid(&wrapped).is_err());
        // Three distinct angles are enough.
        assert!(fit_sinusoid(&[(0.0, 1.0), (PI / 2.0, 0.0), (PI, -1.0)]).is_ok());
    }

    #[test]
    fn single_precision() {
        let samples: Vec<(f32, f32)> = (0..12)
            .map(|k| k as f32 * std::f32::consts::PI / 6.0)
            .map(|t| (t, 0.5 - 0.75 * t.cos()))
            .collect();
        let fit = fit_sinusoid(&samples).unwrap();
        assert!((fit.amplitude - 0.75).abs() < 1e-5);
        assert!((fit.phase.abs() - std::f32::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn error_propagation_on_uniform_grid() {
        // On n equally spaced angles XᵀX = diag(n, n/2, n/2), so with equal
        // sigma: σ_C = σ/√n and σ_A = σ_B = σ√(2/n).
        let n = 72;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|k| k as f64 * 2.0 * PI / n as f64)
            .map(|t| (t, -0.75 * t.cos()))
            .collect();
        let sigma = vec![0.01; n];
        let fit = fit_sinusoid(&samples).unwrap();
        let err = fit.errors(&samples, &sigma).unwrap();
        assert!((err.c_offset - 0.01 / (n as f64).sqrt()).abs() < 1e-12);
        assert!((err.a_cos - 0.01 * (2.0 / n as f64).sqrt()).abs() < 1e-12);
        assert!((err.amplitude - err.a_cos).abs() < 1e-12);
        assert!((err.phase - err.b_sin / 0.75).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn exact_sinusoids_are_reproduced(
            c in -2.0f64..2.0,
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
            offset in 0.0f64..1.0,
            grid in proptest::sample::subsequence((0..64).collect::<Vec<u32>>(), 3..40),
        ) {
            let samples: Vec<(f64, f64)> = grid
                .iter()
                .map(|&k| offset + k as f64 * 2.0 * PI / 64.0)
                .map(|t| (t, c + a * t.cos() + b * t.sin()))
                .collect();
            let fit = fit_sinusoid(&samples).unwrap();
            prop_assert!(fit.rms_residual <= 1e-10);
            prop_assert!((fit.c_offset - c).abs() < 1e-6);
            prop_assert!((fit.amplitude - a.hypot(b)).abs() < 1e-6);
        }
    }
}
