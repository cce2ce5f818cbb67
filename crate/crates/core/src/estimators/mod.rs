//! Reductions of trial streams: coincidence tables, conditional
//! correlations, visibility, fidelity, CHSH, and sinusoid fits.

mod counts;
mod fit;

pub use counts::{
    alice_detection_rate, chsh_from_counts, coincidence_fraction, correlation, fidelity, joint_probabilities,
    outcome_fraction, result_fraction, visibility, AggregateCounts, CoincidenceCell, CorrelationEstimate, Estimate,
    FidelityEstimate, JointProbabilities, Proportion, SettingCounts,
};
pub use fit::{fit_sinusoid, SinusoidFit, SinusoidFitErrors};
