//! Closed-form predictions of the singlet and partial-swap models, the ideal
//! quantum correlations per Bell outcome, and the reference thresholds.

use crate::error::{Error, Result};
use crate::models::BellOutcome;
use crate::scalar::Real;
use crate::sphere::UnitVec3;

/// Named efficiency and visibility thresholds.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds;

impl Thresholds {
    /// Mean detection efficiency of the singlet model (Alice 1/2, Bob 1).
    pub const MEAN_DETECTION_SINGLET_MODEL: f64 = 0.75;
    /// Minimal detection efficiency for a Clauser–Horne violation with two
    /// settings per side on the singlet. Stored for reference only.
    pub const CH_TWO_SETTING_EFFICIENCY: f64 = 0.828;
    /// CHSH visibility threshold `1/√2`.
    pub const CHSH_VISIBILITY: f64 = std::f64::consts::FRAC_1_SQRT_2;
    /// Visibility of the partial swap at unit efficiency, the lowest it gets.
    pub const SWAP_VISIBILITY_FLOOR: f64 = 0.75;
}

fn check_eta<T: Real>(eta: T) -> Result<T> {
    if eta >= T::zero() && eta <= T::one() {
        Ok(eta)
    } else {
        Err(Error::OutOfRange {
            name: "eta",
            value: eta.to_f64_lossy(),
            min: 0.0,
            max: 1.0,
        })
    }
}

/// `E(a, b) = -a·b`.
pub fn singlet_correlation<T: Real>(a: &UnitVec3<T>, b: &UnitVec3<T>) -> T {
    -a.dot(b)
}

/// Probability of the ψ⁻ herald in the partial swap, `η²/4`.
pub fn partial_swap_singlet_prob<T: Real>(eta: T) -> Result<T> {
    let eta = check_eta(eta)?;
    Ok(eta * eta / T::lit(4.0))
}

/// Probability that ψ⁻ is heralded and Alice fires, `η²/8`.
pub fn partial_swap_full_coincidence_prob<T: Real>(eta: T) -> Result<T> {
    let eta = check_eta(eta)?;
    Ok(eta * eta / T::lit(8.0))
}

/// Visibility of the swapped correlation, `1 - η²/4`.
pub fn partial_swap_visibility<T: Real>(eta: T) -> Result<T> {
    let eta = check_eta(eta)?;
    Ok(T::one() - eta * eta / T::lit(4.0))
}

/// Conditional correlation of the partial swap, `-(1 - η²/4) a·b`.
pub fn partial_swap_correlation<T: Real>(a: &UnitVec3<T>, b: &UnitVec3<T>, eta: T) -> Result<T> {
    Ok(partial_swap_visibility(eta)? * singlet_correlation(a, b))
}

/// Ideal correlation of the swapped pair given Bell result `outcome`:
/// `-a·(R b)` with `R` the outcome's frame rotation.
pub fn quantum_outcome_correlation<T: Real>(
    outcome: BellOutcome,
    a: &UnitVec3<T>,
    b: &UnitVec3<T>,
) -> Result<T> {
    let rotated = outcome.to_frame(*b)?;
    Ok(-a.dot(&rotated))
}

/// CHSH combination `E(a,b) + E(a,b') + E(a',b) - E(a',b')`.
pub fn chsh_value<T: Real>(e: [T; 4]) -> T {
    e[0] + e[1] + e[2] - e[3]
}

/// Singlet fidelity of an isotropic mixture with visibility `v`: `(1 + 3v)/4`.
pub fn fidelity_from_visibility<T: Real>(v: T) -> T {
    (T::one() + T::lit(3.0) * v) / T::lit(4.0)
}
