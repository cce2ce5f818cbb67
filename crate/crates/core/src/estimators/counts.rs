use serde::{Deserialize, Serialize};

use crate::analytic::{chsh_value, fidelity_from_visibility};
use crate::error::{Error, Result};
use crate::models::{BellOutcome, DetectorOutcome, SettingPair, TrialRecord};

/// Alice×Bob sign table for one (setting, Bell result) cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceCell {
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    /// Heralded trials where Alice did not fire (Bob never misses).
    pub n_alice_nodetect: u64,
}

impl CoincidenceCell {
    #[inline]
    pub fn n_coinc(&self) -> u64 {
        self.n_pp + self.n_pm + self.n_mp + self.n_mm
    }

    /// Trials heralded with this cell's Bell result.
    #[inline]
    pub fn n_heralded(&self) -> u64 {
        self.n_coinc() + self.n_alice_nodetect
    }

    fn add(&mut self, other: &CoincidenceCell) {
        self.n_pp += other.n_pp;
        self.n_pm += other.n_pm;
        self.n_mp += other.n_mp;
        self.n_mm += other.n_mm;
        self.n_alice_nodetect += other.n_alice_nodetect;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingCounts {
    pub n_trials: u64,
    pub n_no_result: u64,
    /// Indexed like [`BellOutcome::RESULTS`].
    pub cells: [CoincidenceCell; 4],
}

impl SettingCounts {
    pub fn n_bell_result(&self) -> u64 {
        self.n_trials - self.n_no_result
    }

    fn add(&mut self, other: &SettingCounts) {
        self.n_trials += other.n_trials;
        self.n_no_result += other.n_no_result;
        for (c, o) in self.cells.iter_mut().zip(&other.cells) {
            c.add(o);
        }
    }
}

/// Coincidence tables for every setting, the unit of parallel merging.
///
/// Merging is entrywise addition, so shard results can be combined in any
/// order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateCounts {
    settings: Vec<SettingCounts>,
}

impl AggregateCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_settings(n: usize) -> Self {
        Self {
            settings: vec![SettingCounts::default(); n],
        }
    }

    fn setting_mut(&mut self, id: usize) -> &mut SettingCounts {
        if id >= self.settings.len() {
            self.settings.resize(id + 1, SettingCounts::default());
        }
        &mut self.settings[id]
    }

    /// Tallies one trial into exactly one counter.
    pub fn accumulate(&mut self, t: &TrialRecord) {
        let s = self.setting_mut(t.setting_id);
        s.n_trials += 1;
        let Some(k) = t.bell.result_index() else {
            s.n_no_result += 1;
            return;
        };
        debug_assert!(t.bob != DetectorOutcome::NoDetect, "Bob never misses in these models");
        let cell = &mut s.cells[k];
        match (t.alice.value(), t.bob.value()) {
            (Some(1), Some(1)) => cell.n_pp += 1,
            (Some(1), Some(_)) => cell.n_pm += 1,
            (Some(_), Some(1)) => cell.n_mp += 1,
            (Some(_), Some(_)) => cell.n_mm += 1,
            _ => cell.n_alice_nodetect += 1,
        }
    }

    pub fn merge_from(&mut self, other: &AggregateCounts) {
        for (id, s) in other.settings.iter().enumerate() {
            self.setting_mut(id).add(s);
        }
    }

    pub fn merge(mut self, other: &AggregateCounts) -> Self {
        self.merge_from(other);
        self
    }

    pub fn n_settings(&self) -> usize {
        self.settings.len()
    }

    pub fn setting(&self, id: usize) -> Option<&SettingCounts> {
        self.settings.get(id)
    }

    pub fn cell(&self, setting_id: usize, outcome: BellOutcome) -> Result<CoincidenceCell> {
        let k = outcome.result_index().ok_or(Error::NoResultOutcome)?;
        Ok(self
            .settings
            .get(setting_id)
            .map(|s| s.cells[k])
            .unwrap_or_default())
    }

    pub fn n_trials(&self) -> u64 {
        self.settings.iter().map(|s| s.n_trials).sum()
    }

    pub fn n_bell_result(&self) -> u64 {
        self.settings.iter().map(SettingCounts::n_bell_result).sum()
    }

    fn sum_cells(&self, outcome: BellOutcome, f: impl Fn(&CoincidenceCell) -> u64) -> Result<u64> {
        let k = outcome.result_index().ok_or(Error::NoResultOutcome)?;
        Ok(self.settings.iter().map(|s| f(&s.cells[k])).sum())
    }
}

/// Sample proportion `k/n` with its binomial standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
}

impl Proportion {
    pub fn from_counts(k: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("proportion over zero trials"));
        }
        let p = k as f64 / n as f64;
        Ok(Self {
            value: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        })
    }
}

/// Point estimate with a normal-approximation standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub value: f64,
    /// `√((1 - value²)/n_coinc)`.
    pub std_error: f64,
    pub n_coinc: u64,
}

impl CorrelationEstimate {
    fn from_cell(cell: &CoincidenceCell) -> Option<Self> {
        let n = cell.n_coinc();
        if n == 0 {
            return None;
        }
        let same = (cell.n_pp + cell.n_mm) as f64;
        let diff = (cell.n_pm + cell.n_mp) as f64;
        let value = (same - diff) / n as f64;
        Some(Self {
            value,
            std_error: ((1.0 - value * value).max(0.0) / n as f64).sqrt(),
            n_coinc: n,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointProbabilities {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl JointProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// Binomial standard error of each component over `n_coinc` coincidences.
    pub fn std_errors(&self, n_coinc: u64) -> [f64; 4] {
        self.as_array()
            .map(|p| (p * (1.0 - p) / n_coinc as f64).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub fidelity: f64,
    pub std_error: f64,
    pub visibility: f64,
    pub n_coinc: u64,
}

fn nonempty_cell(agg: &AggregateCounts, setting_id: usize, outcome: BellOutcome) -> Result<CoincidenceCell> {
    let cell = agg.cell(setting_id, outcome)?;
    if cell.n_coinc() == 0 {
        return Err(Error::EmptyCell { setting_id, outcome });
    }
    Ok(cell)
}

/// Correlation of Alice's and Bob's signs over the coincidences in one cell.
pub fn correlation(agg: &AggregateCounts, setting_id: usize, outcome: BellOutcome) -> Result<CorrelationEstimate> {
    let cell = nonempty_cell(agg, setting_id, outcome)?;
    Ok(CorrelationEstimate::from_cell(&cell).expect("non-empty cell"))
}

/// The four joint sign frequencies `(p₊₊, p₊₋, p₋₊, p₋₋)` over one cell's coincidences.
pub fn joint_probabilities(
    agg: &AggregateCounts,
    setting_id: usize,
    outcome: BellOutcome,
) -> Result<JointProbabilities> {
    let cell = nonempty_cell(agg, setting_id, outcome)?;
    let n = cell.n_coinc() as f64;
    Ok(JointProbabilities {
        pp: cell.n_pp as f64 / n,
        pm: cell.n_pm as f64 / n,
        mp: cell.n_mp as f64 / n,
        mm: cell.n_mm as f64 / n,
    })
}

/// `V = -mean E` over parallel-analyzer settings.
pub fn visibility(agg: &AggregateCounts, outcome: BellOutcome, settings: &[usize]) -> Result<Estimate> {
    if settings.is_empty() {
        return Err(Error::EmptyInput("visibility needs at least one parallel setting"));
    }
    let mut sum = 0.0;
    let mut var = 0.0;
    for &id in settings {
        let e = correlation(agg, id, outcome)?;
        sum += e.value;
        var += e.std_error * e.std_error;
    }
    let n = settings.len() as f64;
    Ok(Estimate {
        value: -sum / n,
        std_error: var.sqrt() / n,
    })
}

/// Werner-state singlet fidelity `F = (1 + 3V)/4` pooled over `outcomes`.
///
/// Each setting must satisfy `b = ±R a` for every outcome's frame rotation
/// `R`; the sign is folded back so every branch is read in the ψ⁻ frame.
/// Coincidences of all outcomes are pooled per setting, and `V` is the
/// negated mean of the pooled frame correlations over settings.
pub fn fidelity(
    agg: &AggregateCounts,
    settings: &[SettingPair<f64>],
    outcomes: &[BellOutcome],
) -> Result<FidelityEstimate> {
    if settings.is_empty() || outcomes.is_empty() {
        return Err(Error::EmptyInput("fidelity needs settings and outcomes"));
    }
    let mut v_sum = 0.0;
    let mut var_sum = 0.0;
    let mut n_total = 0;
    for s in settings {
        let mut signed = 0.0;
        let mut n = 0u64;
        for &outcome in outcomes {
            let overlap = s.alice.dot(&outcome.to_frame(s.bob)?);
            if (overlap.abs() - 1.0).abs() > 1e-9 {
                return Err(Error::NotParallel {
                    setting_id: s.id,
                    outcome,
                    overlap,
                });
            }
            let cell = agg.cell(s.id, outcome)?;
            let same = (cell.n_pp + cell.n_mm) as f64;
            let diff = (cell.n_pm + cell.n_mp) as f64;
            signed += overlap.signum() * (same - diff);
            n += cell.n_coinc();
        }
        if n == 0 {
            return Err(Error::EmptyCell {
                setting_id: s.id,
                outcome: outcomes[0],
            });
        }
        let e = signed / n as f64;
        v_sum -= e;
        var_sum += (1.0 - e * e).max(0.0) / n as f64;
        n_total += n;
    }
    let m = settings.len() as f64;
    let v = v_sum / m;
    let v_err = var_sum.sqrt() / m;
    Ok(FidelityEstimate {
        fidelity: fidelity_from_visibility(v),
        std_error: 0.75 * v_err,
        visibility: v,
        n_coinc: n_total,
    })
}

/// CHSH combination of the conditional correlations at the four settings
/// `(a,b), (a,b'), (a',b), (a',b')`.
pub fn chsh_from_counts(agg: &AggregateCounts, settings: [usize; 4], outcome: BellOutcome) -> Result<Estimate> {
    let mut e = [0.0; 4];
    let mut var = 0.0;
    for (slot, id) in e.iter_mut().zip(settings) {
        let c = correlation(agg, id, outcome)?;
        *slot = c.value;
        var += c.std_error * c.std_error;
    }
    Ok(Estimate {
        value: chsh_value(e),
        std_error: var.sqrt(),
    })
}

/// Fraction of all trials heralded with `outcome`.
pub fn outcome_fraction(agg: &AggregateCounts, outcome: BellOutcome) -> Result<Proportion> {
    let k = agg.sum_cells(outcome, CoincidenceCell::n_heralded)?;
    Proportion::from_counts(k, agg.n_trials())
}

/// Fraction of all trials that are coincidences under `outcome`.
pub fn coincidence_fraction(agg: &AggregateCounts, outcome: BellOutcome) -> Result<Proportion> {
    let k = agg.sum_cells(outcome, CoincidenceCell::n_coinc)?;
    Proportion::from_counts(k, agg.n_trials())
}

/// Fraction of all trials with any Bell result.
pub fn result_fraction(agg: &AggregateCounts) -> Result<Proportion> {
    Proportion::from_counts(agg.n_bell_result(), agg.n_trials())
}

/// Alice's detection rate among trials heralded with `outcome`.
pub fn alice_detection_rate(agg: &AggregateCounts, outcome: BellOutcome) -> Result<Proportion> {
    let k = agg.sum_cells(outcome, CoincidenceCell::n_coinc)?;
    let n = agg.sum_cells(outcome, CoincidenceCell::n_heralded)?;
    Proportion::from_counts(k, n)
}
