//! Statistical properties of the three models at moderate sample sizes.
//! Every comparison is a 4σ band on a fixed seed.

use lhv_swap::analytic::{partial_swap_correlation, quantum_outcome_correlation, singlet_correlation};
use lhv_swap::estimators::{alice_detection_rate, correlation, AggregateCounts};
use lhv_swap::models::{CompleteSwapParams, PartialSwapParams, SettingPair};
use lhv_swap::runner::{cmd_angle_sweep, run_sharded, simulate, Scenario, ScenarioConfig};
use lhv_swap::{BellOutcome, DetectorOutcome, Model, RandomStream, UnitVec3};

fn random_pairs(n: usize, seed: u64) -> Vec<SettingPair<f64>> {
    let mut s = RandomStream::new(seed, 999);
    (0..n).map(|i| SettingPair::new(i, s.sample_uniform(), s.sample_uniform())).collect()
}

fn within(value: f64, expected: f64, sigma: f64, what: &str) {
    assert!(
        (value - expected).abs() <= 4.0 * sigma + 1e-12,
        "{what}: {value} vs {expected} (σ = {sigma})"
    );
}

#[test]
fn singlet_correlations_and_detection() {
    let pairs = random_pairs(10, 1);
    let agg = simulate(&Model::Singlet, &pairs, 200_000, 7, 4);
    for p in &pairs {
        let e = correlation(&agg, p.id, BellOutcome::PsiMinus).unwrap();
        within(e.value, singlet_correlation(&p.alice, &p.bob), e.std_error, "singlet E");
    }
    let rate = alice_detection_rate(&agg, BellOutcome::PsiMinus).unwrap();
    within(rate.value, 0.5, rate.std_error, "alice detection");
}

#[test]
fn bob_always_detects() {
    let pairs = random_pairs(3, 2);
    let models = [
        Model::Singlet,
        Model::PartialSwap(PartialSwapParams::new(0.7).unwrap()),
        Model::CompleteSwap(CompleteSwapParams::new(0.4).unwrap()),
    ];
    for model in models {
        let misses: u64 = run_sharded(30_000, 3, 3, |stream, n| {
            let mut misses = 0;
            for p in &pairs {
                for _ in 0..n {
                    let t = model.run_trial(p, stream);
                    if t.bell.is_result() && t.bob == DetectorOutcome::NoDetect {
                        misses += 1;
                    }
                }
            }
            misses
        })
        .into_iter()
        .sum();
        assert_eq!(misses, 0);
    }
}

#[test]
fn partial_swap_correlations() {
    let pairs = random_pairs(10, 3);
    for eta in [0.2, 0.4, 1.0] {
        let model = Model::PartialSwap(PartialSwapParams::new(eta).unwrap());
        let agg = simulate(&model, &pairs, 400_000, 11, 4);
        for p in &pairs {
            let e = correlation(&agg, p.id, BellOutcome::PsiMinus).unwrap();
            let exact = partial_swap_correlation(&p.alice, &p.bob, eta).unwrap();
            within(e.value, exact, e.std_error, &format!("partial swap E at η = {eta}"));
        }
        // (η²/8) / (η²/4)
        let rate = alice_detection_rate(&agg, BellOutcome::PsiMinus).unwrap();
        within(rate.value, 0.5, rate.std_error, "alice detection given ψ⁻");
    }
}

/// Sign correlation over every trial, whatever the Bell result. Alice's
/// silent trials are dropped.
fn unconditioned_correlation(agg: &AggregateCounts, id: usize) -> (f64, f64) {
    let s = agg.setting(id).unwrap();
    let (mut same, mut diff) = (0u64, 0u64);
    for c in &s.cells {
        same += c.n_pp + c.n_mm;
        diff += c.n_pm + c.n_mp;
    }
    let n = (same + diff) as f64;
    let e = (same as f64 - diff as f64) / n;
    (e, ((1.0 - e * e) / n).sqrt())
}

#[test]
fn complete_swap_is_uncorrelated_without_conditioning() {
    let pairs = random_pairs(6, 4);
    let model = Model::CompleteSwap(CompleteSwapParams::new(0.0).unwrap());
    let agg = simulate(&model, &pairs, 200_000, 5, 4);
    for p in &pairs {
        let (e, sigma) = unconditioned_correlation(&agg, p.id);
        within(e, 0.0, sigma, "unconditioned E");
    }
}

#[test]
fn complete_swap_branch_symmetry() {
    let a = UnitVec3::new(0.3, -0.5, 0.8).unwrap();
    let b = UnitVec3::new(-0.6, 0.2, 0.4).unwrap();
    let mut pairs = vec![SettingPair::new(0, a, b)];
    for (i, o) in BellOutcome::RESULTS[1..].iter().enumerate() {
        pairs.push(SettingPair::new(i + 1, a, o.to_frame(b).unwrap()));
    }
    let model = Model::CompleteSwap(CompleteSwapParams::new(0.5).unwrap());
    let agg = simulate(&model, &pairs, 500_000, 9, 4);
    for (i, &o) in BellOutcome::RESULTS[1..].iter().enumerate() {
        let e_k = correlation(&agg, 0, o).unwrap();
        let e_psi = correlation(&agg, i + 1, BellOutcome::PsiMinus).unwrap();
        let sigma = e_k.std_error.hypot(e_psi.std_error);
        within(e_k.value, e_psi.value, sigma, &format!("branch symmetry {o}"));
    }
}

#[test]
fn near_ideal_swap_approaches_quantum_correlation() {
    let pairs = random_pairs(4, 6);
    let model = Model::CompleteSwap(CompleteSwapParams::new(0.99).unwrap());
    let agg = simulate(&model, &pairs, 1_000_000, 13, 4);
    for p in &pairs {
        for o in BellOutcome::RESULTS {
            let e = correlation(&agg, p.id, o).unwrap();
            let q = quantum_outcome_correlation(o, &p.alice, &p.bob).unwrap();
            assert!(
                (e.value - q).abs() <= 0.02 + 4.0 * e.std_error,
                "{o}: {} vs {q} (σ = {})",
                e.value,
                e.std_error
            );
        }
    }
}

#[test]
fn partial_swap_sweep_amplitude() {
    for eta in [0.4, 1.0] {
        let cfg = ScenarioConfig {
            scenario: Scenario::PartialSwap,
            eta: Some(eta),
            n_trials: Some(200_000),
            seed: 21,
            n_shards: 4,
            bob_sweep: Some("plane=xz,start=0,stop=360,step=10".parse().unwrap()),
            ..Default::default()
        };
        let report = cmd_angle_sweep(&cfg).unwrap();
        let fit = report.fits.iter().find(|f| f.quantity == "E").unwrap();
        within(fit.amplitude.unwrap(), 1.0 - eta * eta / 4.0, fit.amplitude_stderr.unwrap(), "amplitude");
        within(fit.c_offset.unwrap(), 0.0, fit.c_offset_stderr.unwrap(), "offset");
    }
}

#[test]
fn estimates_depend_only_on_summed_counts() {
    // Two half-size shards of distinct seeds, merged, equal the tallies of
    // the concatenated trial list.
    let pairs = random_pairs(2, 8);
    let model = Model::CompleteSwap(CompleteSwapParams::new(0.3).unwrap());
    let mut whole = AggregateCounts::with_settings(2);
    let mut parts = Vec::new();
    for seed in [1, 2] {
        let mut stream = RandomStream::new(seed, 0);
        let mut part = AggregateCounts::with_settings(2);
        for p in &pairs {
            for _ in 0..5000 {
                let t = model.run_trial(p, &mut stream);
                part.accumulate(&t);
                whole.accumulate(&t);
            }
        }
        parts.push(part);
    }
    let merged = parts[0].clone().merge(&parts[1]);
    assert_eq!(merged, whole);
    for o in BellOutcome::RESULTS {
        assert_eq!(correlation(&merged, 1, o).unwrap(), correlation(&whole, 1, o).unwrap());
    }
}
