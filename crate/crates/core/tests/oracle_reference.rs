//! The shipped oracle fixture: completeness, shape, and agreement with a
//! fresh quadrature on a coarser grid.

use lhv_swap::oracle::fixture::{self, keys, Fixture, FIDELITY_LIMITS, SWEEP_FIGURES, SWEEP_LIMITS, SWEEP_QUANTITIES};
use lhv_swap::oracle::{oracle_bell_result_curve, oracle_fidelity, SphereGrid};
use lhv_swap::BellOutcome;

fn shipped() -> Fixture {
    let f = fixture::reference().unwrap();
    assert!(!f.is_empty(), "oracle_reference.tsv is empty; regenerate with `lhvswap oracle`");
    f
}

#[test]
fn every_key_is_present_and_finite() {
    let f = shipped();
    let mut wanted = Vec::new();
    for l in SWEEP_LIMITS {
        wanted.push(keys::result_prob(l));
    }
    for l in FIDELITY_LIMITS {
        wanted.push(keys::fidelity(l));
        wanted.push(keys::fidelity_p_result(l));
    }
    for o in BellOutcome::RESULTS {
        wanted.push(keys::complete_corr(0.0, o, "z", "z"));
    }
    for fig in SWEEP_FIGURES {
        wanted.push(keys::sweep_limit(fig.figure));
        wanted.push(keys::limit_for_result_prob(fig.target_result_prob));
        for o in BellOutcome::RESULTS {
            for angle in fig.angles_deg() {
                for q in SWEEP_QUANTITIES {
                    wanted.push(keys::sweep_point(fig.figure, o, angle, q));
                }
            }
            for p in ["c_offset", "a_cos", "b_sin", "amplitude", "rms_residual"] {
                wanted.push(keys::sweep_fit(fig.figure, o, p));
            }
        }
    }
    for k in &wanted {
        let r = f.get(k).unwrap_or_else(|_| panic!("missing {k}"));
        assert!(r.value.is_finite() && r.error_bound.is_finite() && r.error_bound >= 0.0, "{k}");
    }
    assert_eq!(f.len(), wanted.len() + SWEEP_FIGURES.len(), "unexpected extra records");
}

#[test]
fn result_curve_is_monotone_with_exact_endpoints() {
    let f = shipped();
    let p: Vec<f64> = SWEEP_LIMITS.iter().map(|&l| f.value(&keys::result_prob(l)).unwrap()).collect();
    assert!((p[0] - 1.0).abs() < 1e-12);
    assert_eq!(*p.last().unwrap(), 0.0);
    assert!(p.windows(2).all(|w| w[1] <= w[0]));

    // A finer sampling at a coarse grid keeps the same shape.
    let limits: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let coarse = oracle_bell_result_curve(&limits, &SphereGrid::square(42).unwrap());
    assert!(coarse.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn figure_limits_hit_their_target_efficiency() {
    let f = shipped();
    for fig in SWEEP_FIGURES {
        let limit = f.value(&keys::sweep_limit(fig.figure)).unwrap();
        let p = f.value(&keys::result_prob(limit)).unwrap();
        assert!((p - fig.target_result_prob).abs() < 2e-3, "figure {}: P = {p}", fig.figure);
    }
}

#[test]
fn fidelity_and_sweep_fixtures_are_consistent() {
    let f = shipped();
    for l in FIDELITY_LIMITS {
        let fid = f.value(&keys::fidelity(l)).unwrap();
        assert!((0.25..=1.0 + 1e-9).contains(&fid), "F({l}) = {fid}");
    }
    for fig in SWEEP_FIGURES {
        for o in BellOutcome::RESULTS {
            for angle in fig.angles_deg() {
                let get = |q| f.value(&keys::sweep_point(fig.figure, o, angle, q)).unwrap();
                let total = get("p_pp") + get("p_pm") + get("p_mp") + get("p_mm");
                assert!((total - 1.0).abs() < 1e-9);
                let e = get("p_pp") + get("p_mm") - get("p_pm") - get("p_mp");
                assert!((e - get("E")).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fresh_quadrature_agrees_within_bounds() {
    let f = shipped();
    let grid = SphereGrid::square(102).unwrap();
    let limits = [0.2, 0.5, 0.8];
    let curve = oracle_bell_result_curve(&limits, &grid);
    for (l, v) in limits.iter().zip(curve) {
        let r = f.get(&keys::result_prob(*l)).unwrap();
        // The 102 grid is the fixture's own coarse reference, so it sits
        // within the recorded bound of the fixture value.
        assert!((v - r.value).abs() <= r.error_bound * 1.000001 + 1e-12, "limit {l}: {v} vs {}", r.value);
    }
    let fid = oracle_fidelity(0.5, &grid).unwrap();
    let r = f.get(&keys::fidelity(0.5)).unwrap();
    assert!((fid.fidelity - r.value).abs() <= r.error_bound * 1.000001 + 1e-12);
}
