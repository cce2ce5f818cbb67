//! Experiment commands: plain runs, limit sweeps, fidelity curves, angle
//! sweeps with sinusoid fits, verification against closed forms, and
//! regeneration of the oracle reference values.
//!
//! Every command is a pure function of its [`ScenarioConfig`]; the same
//! `(config, seed, n_shards)` always produces byte-identical output.

mod config;
mod engine;
mod output;
mod verify;

pub use config::{OutputFormat, Scenario, ScenarioConfig};
pub use engine::{run_sharded, shard_sizes, simulate, simulate_limits};
pub use output::{emit_angle_sweep, emit_table, fits_path, write_csv, write_json};
pub use verify::{cmd_verify, VerifyRow, ORACLE_TOLERANCE};

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    correlation, fidelity, fit_sinusoid, joint_probabilities, result_fraction, AggregateCounts,
};
use crate::models::{BellOutcome, CompleteSwapParams, SettingPair};
use crate::oracle::fixture::{self, keys, Fixture, FIDELITY_LIMITS, SWEEP_FIGURES, SWEEP_LIMITS};
use crate::oracle::SphereGrid;
use crate::settings::{AnglePair, BobSweep};
use crate::sphere::UnitVec3;

/// Default trials per setting for `run` and `angle-sweep`.
pub const DEFAULT_RUN_TRIALS: u64 = 1_000_000;
/// Default trials for `sweep-limit`.
pub const DEFAULT_SWEEP_TRIALS: u64 = 100_000_000;
/// Default trials per axis for `fidelity-curve`.
pub const DEFAULT_FIDELITY_TRIALS: u64 = 10_000_000;
/// Angle sweeps need enough points for a meaningful three-parameter fit.
pub const MIN_SWEEP_POINTS: usize = 8;

fn outcomes_for(scenario: Scenario) -> &'static [BellOutcome] {
    match scenario {
        Scenario::CompleteSwap => &BellOutcome::RESULTS,
        _ => &BellOutcome::RESULTS[..1],
    }
}

/// One (setting, Bell result) cell of a plain run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub setting_id: usize,
    pub alice_theta_deg: f64,
    pub alice_phi_deg: f64,
    pub bob_theta_deg: f64,
    pub bob_phi_deg: f64,
    pub bell_outcome: BellOutcome,
    pub n_trials: u64,
    pub n_heralded: u64,
    pub n_coinc: u64,
    pub n_pp: u64,
    pub n_pm: u64,
    pub n_mp: u64,
    pub n_mm: u64,
    pub p_outcome: f64,
    pub p_coinc: f64,
    pub p_pp: Option<f64>,
    pub p_pm: Option<f64>,
    pub p_mp: Option<f64>,
    pub p_mm: Option<f64>,
    #[serde(rename = "E")]
    pub e: Option<f64>,
    #[serde(rename = "E_stderr")]
    pub e_stderr: Option<f64>,
}

/// Simulates the configured scenario at every (Alice, Bob) setting.
pub fn cmd_run(cfg: &ScenarioConfig) -> Result<Vec<RunRow>> {
    cfg.validate()?;
    let model = cfg.model()?;
    let settings = cfg.setting_pairs();
    let bobs = cfg.bob_directions();
    let n = cfg.trials_or(DEFAULT_RUN_TRIALS);
    let agg = engine::simulate(&model, &settings, n, cfg.seed, cfg.n_shards);
    let mut rows = Vec::new();
    for (s, bob) in settings.iter().zip(&bobs) {
        let counts = agg.setting(s.id).copied().unwrap_or_default();
        for &outcome in outcomes_for(cfg.scenario) {
            let cell = agg.cell(s.id, outcome)?;
            let joint = joint_probabilities(&agg, s.id, outcome).ok();
            let e = correlation(&agg, s.id, outcome).ok();
            rows.push(RunRow {
                setting_id: s.id,
                alice_theta_deg: cfg.alice_setting.0,
                alice_phi_deg: cfg.alice_setting.1,
                bob_theta_deg: bob.0,
                bob_phi_deg: bob.1,
                bell_outcome: outcome,
                n_trials: counts.n_trials,
                n_heralded: cell.n_heralded(),
                n_coinc: cell.n_coinc(),
                n_pp: cell.n_pp,
                n_pm: cell.n_pm,
                n_mp: cell.n_mp,
                n_mm: cell.n_mm,
                p_outcome: cell.n_heralded() as f64 / counts.n_trials as f64,
                p_coinc: cell.n_coinc() as f64 / counts.n_trials as f64,
                p_pp: joint.map(|j| j.pp),
                p_pm: joint.map(|j| j.pm),
                p_mp: joint.map(|j| j.mp),
                p_mm: joint.map(|j| j.mm),
                e: e.map(|e| e.value),
                e_stderr: e.map(|e| e.std_error),
            });
        }
    }
    Ok(rows)
}

fn swap_params(limits: &[f64]) -> Result<Vec<CompleteSwapParams<f64>>> {
    limits.iter().map(|&l| CompleteSwapParams::new(l)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitRow {
    pub limit: f64,
    pub n_trials: u64,
    pub p_result: f64,
    pub stderr: f64,
}

/// Complete-swap Bell-result probability against the acceptance limit.
///
/// All limits share the same trials, so the curve is monotone and each
/// entry equals a `run` at that limit with the same seed.
pub fn cmd_sweep_limit(cfg: &ScenarioConfig) -> Result<Vec<LimitRow>> {
    cfg.validate()?;
    let limits = cfg.limits.clone().unwrap_or_else(|| SWEEP_LIMITS.to_vec());
    let settings = cfg.setting_pairs();
    let n = cfg.trials_or(DEFAULT_SWEEP_TRIALS);
    let aggs = engine::simulate_limits(&swap_params(&limits)?, &settings, n, cfg.seed, cfg.n_shards);
    limits
        .iter()
        .zip(&aggs)
        .map(|(&limit, agg)| {
            let p = result_fraction(agg)?;
            Ok(LimitRow {
                limit,
                n_trials: p.n,
                p_result: p.value,
                stderr: p.std_error,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityRow {
    pub limit: f64,
    pub p_result: f64,
    pub fidelity: f64,
    pub stderr: f64,
}

/// Parallel analyzers along x, y and z.
pub fn parallel_axis_settings() -> Vec<SettingPair<f64>> {
    [UnitVec3::unit_x(), UnitVec3::unit_y(), UnitVec3::unit_z()]
        .into_iter()
        .enumerate()
        .map(|(i, a)| SettingPair::new(i, a, a))
        .collect()
}

/// Werner fidelity of the swapped pair, pooled over all four Bell results,
/// against the acceptance limit. Analyzer settings in the config are
/// ignored; the estimator needs parallel x, y and z analyzers.
///
/// A limit with no coincidences is an error rather than a silent gap.
pub fn cmd_fidelity_curve(cfg: &ScenarioConfig) -> Result<Vec<FidelityRow>> {
    cfg.validate()?;
    let limits = cfg.limits.clone().unwrap_or_else(|| FIDELITY_LIMITS.to_vec());
    let settings = parallel_axis_settings();
    let n = cfg.trials_or(DEFAULT_FIDELITY_TRIALS);
    let aggs = engine::simulate_limits(&swap_params(&limits)?, &settings, n, cfg.seed, cfg.n_shards);
    limits
        .iter()
        .zip(&aggs)
        .map(|(&limit, agg)| {
            let f = fidelity(agg, &settings, &BellOutcome::RESULTS)?;
            Ok(FidelityRow {
                limit,
                p_result: result_fraction(agg)?.value,
                fidelity: f.fidelity,
                stderr: f.std_error,
            })
        })
        .collect()
}

/// One sweep angle and Bell result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnglePoint {
    pub angle_deg: f64,
    pub bell_outcome: BellOutcome,
    pub n_coinc: u64,
    pub p_pp: Option<f64>,
    pub p_pm: Option<f64>,
    pub p_mp: Option<f64>,
    pub p_mm: Option<f64>,
    #[serde(rename = "E")]
    pub e: Option<f64>,
    #[serde(rename = "E_stderr")]
    pub e_stderr: Option<f64>,
}

/// `C + A cos θ + B sin θ` fitted to one curve of an angle sweep. The
/// numeric fields are empty when the fit failed; `status` says why.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRow {
    pub bell_outcome: BellOutcome,
    pub quantity: &'static str,
    pub n_points: usize,
    pub c_offset: Option<f64>,
    pub a_cos: Option<f64>,
    pub b_sin: Option<f64>,
    pub amplitude: Option<f64>,
    pub phase_deg: Option<f64>,
    pub rms_residual: Option<f64>,
    pub c_offset_stderr: Option<f64>,
    pub amplitude_stderr: Option<f64>,
    pub phase_stderr_deg: Option<f64>,
    /// Root-mean-square sampling error of the points; a residual near this
    /// value means the sinusoid explains everything but noise.
    pub noise_rms: Option<f64>,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleSweepReport {
    pub scenario: Scenario,
    pub eta: Option<f64>,
    pub limit: Option<f64>,
    pub alice_setting: AnglePair,
    pub bob_sweep: BobSweep,
    pub n_trials_per_angle: u64,
    pub seed: u64,
    pub n_shards: usize,
    pub points: Vec<AnglePoint>,
    pub fits: Vec<FitRow>,
}

pub const FIT_QUANTITIES: [&str; 5] = ["E", "p_pp", "p_pm", "p_mp", "p_mm"];

fn fit_curve(outcome: BellOutcome, quantity: &'static str, pts: &[(f64, f64, f64)]) -> FitRow {
    let samples: Vec<(f64, f64)> = pts.iter().map(|&(t, y, _)| (t.to_radians(), y)).collect();
    let sigmas: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let noise = (!sigmas.is_empty())
        .then(|| (sigmas.iter().map(|s| s * s).sum::<f64>() / sigmas.len() as f64).sqrt());
    let mut row = FitRow {
        bell_outcome: outcome,
        quantity,
        n_points: pts.len(),
        c_offset: None,
        a_cos: None,
        b_sin: None,
        amplitude: None,
        phase_deg: None,
        rms_residual: None,
        c_offset_stderr: None,
        amplitude_stderr: None,
        phase_stderr_deg: None,
        noise_rms: noise,
        status: "ok".into(),
    };
    let fit = match fit_sinusoid(&samples) {
        Ok(f) => f,
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    };
    row.c_offset = Some(fit.c_offset);
    row.a_cos = Some(fit.a_cos);
    row.b_sin = Some(fit.b_sin);
    row.amplitude = Some(fit.amplitude);
    row.phase_deg = Some(fit.phase.to_degrees());
    row.rms_residual = Some(fit.rms_residual);
    if let Ok(err) = fit.errors(&samples, &sigmas) {
        row.c_offset_stderr = Some(err.c_offset);
        row.amplitude_stderr = Some(err.amplitude);
        row.phase_stderr_deg = Some(err.phase.to_degrees());
    }
    row
}

fn sweep_points(agg: &AggregateCounts, angles: &[f64], outcome: BellOutcome) -> Result<Vec<AnglePoint>> {
    angles
        .iter()
        .enumerate()
        .map(|(id, &angle_deg)| {
            let cell = agg.cell(id, outcome)?;
            let joint = joint_probabilities(agg, id, outcome).ok();
            let e = correlation(agg, id, outcome).ok();
            Ok(AnglePoint {
                angle_deg,
                bell_outcome: outcome,
                n_coinc: cell.n_coinc(),
                p_pp: joint.map(|j| j.pp),
                p_pm: joint.map(|j| j.pm),
                p_mp: joint.map(|j| j.mp),
                p_mm: joint.map(|j| j.mm),
                e: e.map(|e| e.value),
                e_stderr: e.map(|e| e.std_error),
            })
        })
        .collect()
}

fn point_value(p: &AnglePoint, quantity: &str) -> Option<(f64, f64)> {
    let binomial = |v: Option<f64>| v.map(|v| (v, (v * (1.0 - v) / p.n_coinc as f64).sqrt()));
    match quantity {
        "E" => p.e.zip(p.e_stderr),
        "p_pp" => binomial(p.p_pp),
        "p_pm" => binomial(p.p_pm),
        "p_mp" => binomial(p.p_mp),
        "p_mm" => binomial(p.p_mm),
        _ => None,
    }
}

/// Sweeps Bob's analyzer through a plane with Alice fixed and fits a
/// sinusoid to every curve, per Bell result.
pub fn cmd_angle_sweep(cfg: &ScenarioConfig) -> Result<AngleSweepReport> {
    cfg.validate()?;
    let sweep = cfg
        .bob_sweep
        .ok_or_else(|| Error::config("bob_sweep", "angle-sweep needs a sweep of Bob's analyzer"))?;
    if cfg.bob_settings.is_some() {
        return Err(Error::config("bob_settings", "angle-sweep takes bob_sweep, not a list"));
    }
    let angles = sweep.angles_deg();
    if angles.len() < MIN_SWEEP_POINTS {
        return Err(Error::config(
            "bob_sweep",
            format!("{} points; at least {MIN_SWEEP_POINTS} are needed", angles.len()),
        ));
    }
    let model = cfg.model()?;
    let n = cfg.trials_or(DEFAULT_RUN_TRIALS);
    let agg = engine::simulate(&model, &cfg.setting_pairs(), n, cfg.seed, cfg.n_shards);
    let mut points = Vec::new();
    let mut fits = Vec::new();
    for &outcome in outcomes_for(cfg.scenario) {
        let curve = sweep_points(&agg, &angles, outcome)?;
        for q in FIT_QUANTITIES {
            let pts: Vec<(f64, f64, f64)> = curve
                .iter()
                .filter_map(|p| point_value(p, q).map(|(v, s)| (p.angle_deg, v, s)))
                .collect();
            fits.push(fit_curve(outcome, q, &pts));
        }
        points.extend(curve);
    }
    Ok(AngleSweepReport {
        scenario: cfg.scenario,
        eta: cfg.eta.filter(|_| cfg.scenario == Scenario::PartialSwap),
        limit: cfg.limit.filter(|_| cfg.scenario == Scenario::CompleteSwap),
        alice_setting: cfg.alice_setting,
        bob_sweep: sweep,
        n_trials_per_angle: n,
        seed: cfg.seed,
        n_shards: cfg.n_shards,
        points,
        fits,
    })
}

/// The reference angle-sweep setups: complete swap at the limit where the
/// Bell-result probability reaches the figure's target, read from the
/// shipped oracle values.
pub fn figure_preset(figure: u8, reference: &Fixture) -> Result<ScenarioConfig> {
    let fig = SWEEP_FIGURES
        .iter()
        .find(|f| f.figure == figure)
        .ok_or_else(|| {
            let known: Vec<String> = SWEEP_FIGURES.iter().map(|f| f.figure.to_string()).collect();
            Error::config("figure", format!("{figure} is not one of {}", known.join(", ")))
        })?;
    Ok(ScenarioConfig {
        scenario: Scenario::CompleteSwap,
        limit: Some(reference.value(&keys::sweep_limit(fig.figure))?),
        alice_setting: fig.alice,
        bob_sweep: Some(BobSweep {
            plane: fig.plane,
            start_deg: 0.0,
            stop_deg: 360.0,
            step_deg: fig.step_deg,
        }),
        ..ScenarioConfig::default()
    })
}

/// Regenerates the oracle reference values at `grid` and writes them to
/// `path`.
pub fn cmd_oracle(grid: &SphereGrid, path: &Path, progress: impl FnMut(&str)) -> Result<Fixture> {
    let f = fixture::generate(grid, progress)?;
    f.write(path)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(limit: f64, n: u64) -> ScenarioConfig {
        ScenarioConfig {
            scenario: Scenario::CompleteSwap,
            limit: Some(limit),
            n_trials: Some(n),
            seed: 5,
            n_shards: 3,
            ..Default::default()
        }
    }

    #[test]
    fn run_rows_per_outcome() {
        let rows = cmd_run(&complete(0.3, 2000)).unwrap();
        assert_eq!(rows.len(), 4);
        let heralded: u64 = rows.iter().map(|r| r.n_heralded).sum();
        assert!(heralded <= 2000);
        let singlet = cmd_run(&ScenarioConfig {
            n_trials: Some(100),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(singlet.len(), 1);
        assert_eq!(singlet[0].e, Some(-1.0));
    }

    #[test]
    fn sweep_limit_matches_run() {
        let cfg = ScenarioConfig {
            limits: Some(vec![0.0, 0.5, 1.0]),
            ..complete(0.5, 4000)
        };
        let rows = cmd_sweep_limit(&cfg).unwrap();
        assert_eq!(rows[0].p_result, 1.0);
        assert_eq!(rows[2].p_result, 0.0);
        let run = cmd_run(&cfg).unwrap();
        let heralded: u64 = run.iter().map(|r| r.n_heralded).sum();
        assert_eq!(heralded as f64 / 4000.0, rows[1].p_result);
    }

    #[test]
    fn fidelity_curve_reports_empty_limit() {
        let cfg = ScenarioConfig {
            limits: Some(vec![0.2, 1.0]),
            ..complete(0.0, 1000)
        };
        let err = cmd_fidelity_curve(&cfg).unwrap_err();
        assert!(matches!(err, Error::EmptyCell { .. }), "{err}");
    }

    #[test]
    fn angle_sweep_needs_points() {
        let mut cfg = complete(0.5, 500);
        assert!(matches!(cmd_angle_sweep(&cfg), Err(Error::Config { ref field, .. }) if field == "bob_sweep"));
        cfg.bob_sweep = Some("plane=xz,start=0,stop=360,step=60".parse().unwrap());
        assert!(cmd_angle_sweep(&cfg).is_err());
        cfg.bob_sweep = Some("plane=xz,start=0,stop=360,step=30".parse().unwrap());
        let report = cmd_angle_sweep(&cfg).unwrap();
        assert_eq!(report.points.len(), 4 * 12);
        assert_eq!(report.fits.len(), 4 * 5);
        assert!(report.fits.iter().all(|f| f.status == "ok"));
    }

    #[test]
    fn singlet_sweep_fit_recovers_cosine() {
        let cfg = ScenarioConfig {
            n_trials: Some(20_000),
            bob_sweep: Some("plane=xz,start=0,stop=360,step=15".parse().unwrap()),
            ..Default::default()
        };
        let report = cmd_angle_sweep(&cfg).unwrap();
        let e = &report.fits[0];
        assert_eq!(e.quantity, "E");
        assert!((e.amplitude.unwrap() - 1.0).abs() < 0.03);
        assert!((e.phase_deg.unwrap().abs() - 180.0).abs() < 2.0);
    }
}
