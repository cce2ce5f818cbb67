//! Local-variable trial generators.
//!
//! Three models share one [`TrialRecord`] shape:
//!
//! * the singlet model: `λ₂ = -λ₁`; Alice fires with probability `|a·λ₁|`
//!   and reports `sign(a·λ₁)`, Bob always reports `sign(b·λ₂)`;
//! * the partial swap: two independent singlet sources, and a Bell
//!   measurement on qubits 2 and 3 that only recognises ψ⁻, accepting when
//!   `λ₂·λ₃ ≤ η²/2 - 1`;
//! * the complete swap: the Bell result is the branch with the most negative
//!   of `λ₁·λ₄, λ₁·R_xλ₄, λ₁·R_yλ₄, λ₁·R_zλ₄`, accepted when below `-limit`.
//!
//! In both swap models Alice measures qubit 1 and Bob measures qubit 4.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sphere::{AxisRotation, RandomStream, UnitVec3};

/// Result of the Bell measurement on the two middle qubits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BellOutcome {
    PsiMinus,
    PhiMinus,
    PhiPlus,
    PsiPlus,
    NoResult,
}

impl BellOutcome {
    pub const ALL: [BellOutcome; 5] = [
        BellOutcome::PsiMinus,
        BellOutcome::PhiMinus,
        BellOutcome::PhiPlus,
        BellOutcome::PsiPlus,
        BellOutcome::NoResult,
    ];

    /// The four outcomes that herald a swapped pair.
    pub const RESULTS: [BellOutcome; 4] = [
        BellOutcome::PsiMinus,
        BellOutcome::PhiMinus,
        BellOutcome::PhiPlus,
        BellOutcome::PsiPlus,
    ];

    /// Position in [`BellOutcome::RESULTS`]; `None` for `NoResult`.
    #[inline]
    pub fn result_index(self) -> Option<usize> {
        match self {
            BellOutcome::PsiMinus => Some(0),
            BellOutcome::PhiMinus => Some(1),
            BellOutcome::PhiPlus => Some(2),
            BellOutcome::PsiPlus => Some(3),
            BellOutcome::NoResult => None,
        }
    }

    #[inline]
    pub fn is_result(self) -> bool {
        self != BellOutcome::NoResult
    }

    /// Rotation relating this Bell state to ψ⁻ (`φ⁻ ↔ R_x`, `φ⁺ ↔ R_y`,
    /// `ψ⁺ ↔ R_z`). `None` for ψ⁻ (identity) and for `NoResult`.
    pub fn frame_rotation(self) -> Option<AxisRotation> {
        match self {
            BellOutcome::PhiMinus => Some(AxisRotation::X),
            BellOutcome::PhiPlus => Some(AxisRotation::Y),
            BellOutcome::PsiPlus => Some(AxisRotation::Z),
            BellOutcome::PsiMinus | BellOutcome::NoResult => None,
        }
    }

    /// Applies the frame rotation of this outcome to `v`.
    pub fn to_frame<T: Real>(self, v: UnitVec3<T>) -> Result<UnitVec3<T>> {
        match self {
            BellOutcome::NoResult => Err(Error::NoResultOutcome),
            BellOutcome::PsiMinus => Ok(v),
            other => Ok(other.frame_rotation().expect("result outcome").rotate_pi(v)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BellOutcome::PsiMinus => "psi_minus",
            BellOutcome::PhiMinus => "phi_minus",
            BellOutcome::PhiPlus => "phi_plus",
            BellOutcome::PsiPlus => "psi_plus",
            BellOutcome::NoResult => "no_result",
        }
    }
}

impl fmt::Display for BellOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BellOutcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BellOutcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::config("bell_outcome", format!("unknown outcome `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorOutcome {
    Plus,
    Minus,
    NoDetect,
}

impl DetectorOutcome {
    /// `Plus` for non-negative projections.
    #[inline]
    pub fn from_sign<T: Real>(projection: T) -> Self {
        if projection >= T::zero() {
            DetectorOutcome::Plus
        } else {
            DetectorOutcome::Minus
        }
    }

    #[inline]
    pub fn value(self) -> Option<i8> {
        match self {
            DetectorOutcome::Plus => Some(1),
            DetectorOutcome::Minus => Some(-1),
            DetectorOutcome::NoDetect => None,
        }
    }
}

/// One simulated run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub bell: BellOutcome,
    pub alice: DetectorOutcome,
    pub bob: DetectorOutcome,
    pub setting_id: usize,
}

impl TrialRecord {
    fn no_result(setting_id: usize) -> Self {
        Self {
            bell: BellOutcome::NoResult,
            alice: DetectorOutcome::NoDetect,
            bob: DetectorOutcome::NoDetect,
            setting_id,
        }
    }
}

/// Analyzer directions `(a, b)` tagged with their index in the setting table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingPair<T> {
    pub id: usize,
    pub alice: UnitVec3<T>,
    pub bob: UnitVec3<T>,
}

impl<T: Real> SettingPair<T> {
    pub fn new(id: usize, alice: UnitVec3<T>, bob: UnitVec3<T>) -> Self {
        Self { id, alice, bob }
    }
}

fn check_unit_interval<T: Real>(name: &'static str, value: T) -> Result<T> {
    if value >= T::zero() && value <= T::one() {
        Ok(value)
    } else {
        Err(Error::OutOfRange {
            name,
            value: value.to_f64_lossy(),
            min: 0.0,
            max: 1.0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialSwapParams<T> {
    eta: T,
}

impl<T: Real> PartialSwapParams<T> {
    pub fn new(eta: T) -> Result<Self> {
        Ok(Self {
            eta: check_unit_interval("eta", eta)?,
        })
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    /// ψ⁻ is heralded iff `λ₂·λ₃` is at or below this value (`η²/2 - 1`).
    #[inline]
    pub fn singlet_threshold(&self) -> T {
        self.eta * self.eta / T::lit(2.0) - T::one()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteSwapParams<T> {
    limit: T,
}

impl<T: Real> CompleteSwapParams<T> {
    pub fn new(limit: T) -> Result<Self> {
        Ok(Self {
            limit: check_unit_interval("limit", limit)?,
        })
    }

    pub fn limit(&self) -> T {
        self.limit
    }
}

/// Alice's lossy detector: fires when `u < |a·λ₁|`, reporting `sign(a·λ₁)`.
#[inline]
pub fn alice_outcome<T: Real>(a: &UnitVec3<T>, lambda1: &UnitVec3<T>, u: T) -> DetectorOutcome {
    let projection = a.dot(lambda1);
    if u < projection.abs() {
        DetectorOutcome::from_sign(projection)
    } else {
        DetectorOutcome::NoDetect
    }
}

/// Singlet model with the hidden variable and Alice's detection draw given.
pub fn singlet_outcomes<T: Real>(
    setting: &SettingPair<T>,
    lambda1: UnitVec3<T>,
    u: T,
) -> TrialRecord {
    let lambda2 = -lambda1;
    TrialRecord {
        bell: BellOutcome::PsiMinus,
        alice: alice_outcome(&setting.alice, &lambda1, u),
        bob: DetectorOutcome::from_sign(setting.bob.dot(&lambda2)),
        setting_id: setting.id,
    }
}

pub fn run_singlet_trial<T: Real>(setting: &SettingPair<T>, stream: &mut RandomStream) -> TrialRecord {
    let lambda1 = stream.sample_uniform();
    let u = T::lit(stream.next_uniform());
    singlet_outcomes(setting, lambda1, u)
}

/// Partial-swap Bell measurement: ψ⁻ iff `λ₂·λ₃ ≤ η²/2 - 1`.
#[inline]
pub fn partial_bell_outcome<T: Real>(
    lambda2: &UnitVec3<T>,
    lambda3: &UnitVec3<T>,
    params: &PartialSwapParams<T>,
) -> BellOutcome {
    if lambda2.dot(lambda3) <= params.singlet_threshold() {
        BellOutcome::PsiMinus
    } else {
        BellOutcome::NoResult
    }
}

pub fn run_partial_swap_trial<T: Real>(
    setting: &SettingPair<T>,
    params: &PartialSwapParams<T>,
    stream: &mut RandomStream,
) -> TrialRecord {
    let lambda1: UnitVec3<T> = stream.sample_uniform();
    let lambda3: UnitVec3<T> = stream.sample_uniform();
    // Alice's draw is taken on every trial so that a trial always consumes
    // the same stretch of the stream, whatever the Bell result.
    let u = T::lit(stream.next_uniform());
    let (lambda2, lambda4) = (-lambda1, -lambda3);
    let bell = partial_bell_outcome(&lambda2, &lambda3, params);
    if bell == BellOutcome::NoResult {
        return TrialRecord::no_result(setting.id);
    }
    TrialRecord {
        bell,
        alice: alice_outcome(&setting.alice, &lambda1, u),
        bob: DetectorOutcome::from_sign(setting.bob.dot(&lambda4)),
        setting_id: setting.id,
    }
}

/// The four scalar products `λ₁·λ₄, λ₁·R_xλ₄, λ₁·R_yλ₄, λ₁·R_zλ₄`,
/// in [`BellOutcome::RESULTS`] order.
#[inline]
pub fn branch_products<T: Real>(lambda1: &UnitVec3<T>, lambda4: &UnitVec3<T>) -> [T; 4] {
    let u = lambda1.x() * lambda4.x();
    let v = lambda1.y() * lambda4.y();
    let w = lambda1.z() * lambda4.z();
    [u + v + w, u - v - w, -u + v - w, -u - v + w]
}

/// Complete Bell measurement: the branch with the most negative scalar
/// product, provided it lies strictly below `-limit`.
///
/// Ties resolve in the order ψ⁻, φ⁻, φ⁺, ψ⁺.
#[inline]
pub fn bell_argmin<T: Real>(lambda1: &UnitVec3<T>, lambda4: &UnitVec3<T>, limit: T) -> BellOutcome {
    let products = branch_products(lambda1, lambda4);
    let mut best = 0;
    for k in 1..4 {
        if products[k] < products[best] {
            best = k;
        }
    }
    // |λ₁·Rλ₄| ≤ 1; the clamp keeps rounding from admitting pairs at limit 1.
    if products[best].max(-T::one()) < -limit {
        BellOutcome::RESULTS[best]
    } else {
        BellOutcome::NoResult
    }
}

/// Complete swap with hidden variables and Alice's detection draw given.
pub fn complete_swap_outcomes<T: Real>(
    setting: &SettingPair<T>,
    params: &CompleteSwapParams<T>,
    lambda1: UnitVec3<T>,
    lambda4: UnitVec3<T>,
    u: T,
) -> TrialRecord {
    let bell = bell_argmin(&lambda1, &lambda4, params.limit);
    if bell == BellOutcome::NoResult {
        return TrialRecord::no_result(setting.id);
    }
    TrialRecord {
        bell,
        alice: alice_outcome(&setting.alice, &lambda1, u),
        bob: DetectorOutcome::from_sign(setting.bob.dot(&lambda4)),
        setting_id: setting.id,
    }
}

pub fn run_complete_swap_trial<T: Real>(
    setting: &SettingPair<T>,
    params: &CompleteSwapParams<T>,
    stream: &mut RandomStream,
) -> TrialRecord {
    let lambda1: UnitVec3<T> = stream.sample_uniform();
    let lambda3: UnitVec3<T> = stream.sample_uniform();
    let u = T::lit(stream.next_uniform());
    complete_swap_outcomes(setting, params, lambda1, -lambda3, u)
}

/// Any of the three models, ready to generate trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Model<T> {
    Singlet,
    PartialSwap(PartialSwapParams<T>),
    CompleteSwap(CompleteSwapParams<T>),
}

impl<T: Real> Model<T> {
    #[inline]
    pub fn run_trial(&self, setting: &SettingPair<T>, stream: &mut RandomStream) -> TrialRecord {
        match self {
            Model::Singlet => run_singlet_trial(setting, stream),
            Model::PartialSwap(p) => run_partial_swap_trial(setting, p, stream),
            Model::CompleteSwap(p) => run_complete_swap_trial(setting, p, stream),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_vec() -> UnitVec3<f64> {
        UnitVec3::new(0.37, -0.52, 0.77).unwrap()
    }

    #[test]
    fn five_outcomes() {
        assert_eq!(BellOutcome::ALL.len(), 5);
        for o in BellOutcome::ALL {
            assert_eq!(o.as_str().parse::<BellOutcome>().unwrap(), o);
        }
    }

    #[test]
    fn aligned_hidden_variable_always_fires() {
        let a = generic_vec();
        let setting = SettingPair::new(0, a, a);
        for u in [0.0, 0.5, 0.999_999] {
            let t = singlet_outcomes(&setting, a, u);
            assert_eq!(t.alice, DetectorOutcome::Plus);
            assert_eq!(t.bob, DetectorOutcome::Minus);
        }
    }

    #[test]
    fn orthogonal_hidden_variable_never_fires() {
        let a = UnitVec3::<f64>::unit_z();
        let setting = SettingPair::new(0, a, a);
        for u in [0.0, 0.3, 0.9] {
            let t = singlet_outcomes(&setting, UnitVec3::unit_x(), u);
            assert_eq!(t.alice, DetectorOutcome::NoDetect);
            assert_ne!(t.bob, DetectorOutcome::NoDetect);
        }
    }

    #[test]
    fn argmin_examples() {
        let l1 = generic_vec();
        assert_eq!(bell_argmin(&l1, &-l1, 0.0), BellOutcome::PsiMinus);
        assert_eq!(bell_argmin(&l1, &-AxisRotation::X.rotate_pi(l1), 0.0), BellOutcome::PhiMinus);
        assert_eq!(bell_argmin(&l1, &-AxisRotation::Y.rotate_pi(l1), 0.0), BellOutcome::PhiPlus);
        assert_eq!(bell_argmin(&l1, &-AxisRotation::Z.rotate_pi(l1), 0.0), BellOutcome::PsiPlus);
        // Every product is ≥ -1, so the strict test at limit 1 fails.
        assert_eq!(bell_argmin(&l1, &-l1, 1.0), BellOutcome::NoResult);
    }

    #[test]
    fn argmin_tie_break_prefers_identity() {
        // λ₁ = λ₄ = x: products are (1, 1, -1, -1); φ⁺ precedes ψ⁺.
        let x = UnitVec3::<f64>::unit_x();
        assert_eq!(bell_argmin(&x, &x, 0.0), BellOutcome::PhiPlus);
        // λ₄ = -x: products (-1, -1, 1, 1); ψ⁻ precedes φ⁻.
        assert_eq!(bell_argmin(&x, &-x, 0.0), BellOutcome::PsiMinus);
    }

    #[test]
    fn params_validate_range() {
        assert!(PartialSwapParams::new(1.2).is_err());
        assert!(PartialSwapParams::new(-0.1).is_err());
        assert!(CompleteSwapParams::new(1.0001).is_err());
        assert!(CompleteSwapParams::new(f64::NAN).is_err());
        assert_eq!(PartialSwapParams::new(1.0).unwrap().singlet_threshold(), -0.5);
    }

    #[test]
    fn no_result_trials_have_no_detections() {
        let setting = SettingPair::new(3, UnitVec3::unit_z(), UnitVec3::unit_x());
        let params = PartialSwapParams::new(0.0).unwrap();
        let mut s = RandomStream::new(1, 0);
        for _ in 0..100_000 {
            let t = run_partial_swap_trial(&setting, &params, &mut s);
            assert_eq!(t.bell, BellOutcome::NoResult);
            assert_eq!(t.alice, DetectorOutcome::NoDetect);
            assert_eq!(t.setting_id, 3);
        }
    }

    #[test]
    fn bob_always_detects_on_result() {
        let setting = SettingPair::new(0, generic_vec(), UnitVec3::unit_y());
        let params = CompleteSwapParams::new(0.2).unwrap();
        let mut s = RandomStream::new(4, 0);
        for _ in 0..100_000 {
            let t = run_complete_swap_trial(&setting, &params, &mut s);
            assert_eq!(t.bell.is_result(), t.bob != DetectorOutcome::NoDetect);
        }
    }

    #[test]
    fn complete_swap_limit_zero_always_heralds() {
        let setting = SettingPair::new(0, generic_vec(), UnitVec3::unit_y());
        let params = CompleteSwapParams::new(0.0).unwrap();
        let mut s = RandomStream::new(8, 0);
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| run_complete_swap_trial(&setting, &params, &mut s).bell.is_result())
            .count();
        assert_eq!(hits, n);
    }

    #[test]
    fn frame_rotation_maps() {
        let v = generic_vec();
        assert_eq!(BellOutcome::PsiMinus.to_frame(v).unwrap(), v);
        assert_eq!(BellOutcome::PhiPlus.to_frame(v).unwrap(), AxisRotation::Y.rotate_pi(v));
        assert!(BellOutcome::NoResult.to_frame(v).is_err());
    }
}
