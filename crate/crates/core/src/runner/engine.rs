//! Sharded trial loops. Shard `s` owns random substream `s` of the run's
//! seed and a fixed slice of the trials, so results depend only on
//! `(seed, n_shards)` and never on thread scheduling.

use rayon::prelude::*;

use crate::estimators::AggregateCounts;
use crate::models::{complete_swap_outcomes, CompleteSwapParams, Model, SettingPair};
use crate::sphere::{RandomStream, UnitVec3};

/// Trials per shard: `n / shards`, with the remainder spread over the first
/// shards.
pub fn shard_sizes(n: u64, shards: usize) -> Vec<u64> {
    let k = shards as u64;
    (0..k).map(|s| n / k + u64::from(s < n % k)).collect()
}

/// Runs `work(stream, n_s)` for every shard in parallel and returns the
/// results in shard order.
pub fn run_sharded<A, F>(n_trials: u64, seed: u64, n_shards: usize, work: F) -> Vec<A>
where
    A: Send,
    F: Fn(&mut RandomStream, u64) -> A + Sync,
{
    shard_sizes(n_trials, n_shards)
        .into_par_iter()
        .enumerate()
        .map(|(s, n)| work(&mut RandomStream::new(seed, s as u64), n))
        .collect()
}

fn merge_in_order(parts: Vec<AggregateCounts>, n_settings: usize) -> AggregateCounts {
    parts
        .iter()
        .fold(AggregateCounts::with_settings(n_settings), |acc, p| acc.merge(p))
}

/// `n_trials` trials of `model` at every setting.
pub fn simulate(
    model: &Model<f64>,
    settings: &[SettingPair<f64>],
    n_trials: u64,
    seed: u64,
    n_shards: usize,
) -> AggregateCounts {
    let parts = run_sharded(n_trials, seed, n_shards, |stream, n| {
        let mut agg = AggregateCounts::with_settings(settings.len());
        for s in settings {
            for _ in 0..n {
                agg.accumulate(&model.run_trial(s, stream));
            }
        }
        agg
    });
    merge_in_order(parts, settings.len())
}

/// Complete swap at several limits on common random numbers: each trial's
/// `(λ₁, λ₃, u)` is drawn once and judged at every limit. Entry `i` equals
/// [`simulate`] with `Model::CompleteSwap` at `limits[i]` and the same seed.
pub fn simulate_limits(
    limits: &[CompleteSwapParams<f64>],
    settings: &[SettingPair<f64>],
    n_trials: u64,
    seed: u64,
    n_shards: usize,
) -> Vec<AggregateCounts> {
    let parts = run_sharded(n_trials, seed, n_shards, |stream, n| {
        let mut aggs = vec![AggregateCounts::with_settings(settings.len()); limits.len()];
        for s in settings {
            for _ in 0..n {
                let lambda1: UnitVec3<f64> = stream.sample_uniform();
                let lambda3: UnitVec3<f64> = stream.sample_uniform();
                let u = stream.next_uniform();
                for (agg, params) in aggs.iter_mut().zip(limits) {
                    agg.accumulate(&complete_swap_outcomes(s, params, lambda1, -lambda3, u));
                }
            }
        }
        aggs
    });
    (0..limits.len())
        .map(|i| merge_in_order(parts.iter().map(|p| p[i].clone()).collect(), settings.len()))
        .collect()
}
