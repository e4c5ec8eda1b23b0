//! Processes and estimates that connect the stochastic system to its fluid limit.

pub mod continuity;
pub mod gap;
pub mod martingale;
pub mod stats;
pub mod tails;

pub use continuity::{compare_to_fluid, modulus_of_continuity, StepPath};
pub use gap::{gap_series, pair_counts, GapSeries};
pub use martingale::{
    martingale_ceiling, martingale_residual, martingale_second_moments, pathwise_identity_error,
    MartingaleMoments, MartingaleResidualSeries,
};
pub use tails::{
    auxiliary_tail_ceiling, auxiliary_tail_decay, auxiliary_tail_estimate, bernstein_bound,
    poisson_bernoulli_analytic, poisson_bernoulli_tail, sup_gap_concentration, PoissonBernoulliCheck,
    TailDecay, TailEstimate,
};
