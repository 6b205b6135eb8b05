//! Batched Bayesian optimization of training viewpoints.
//!
//! A Gaussian-process surrogate over the unit square models the success
//! rate of a policy fine-tuned at each viewpoint. Batches of viewpoints are
//! chosen with a quasi-Monte-Carlo q-UCB acquisition. A synthetic simulator
//! stands in for fine-tuning and rollouts, and grid and random baselines are
//! run at equal budget for comparison.

pub mod acquisition;
pub mod campaign;
pub mod error;
pub mod geometry;
pub mod qmc;
pub mod seed;
pub mod simulator;
pub mod surrogate;
pub mod theory;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use acquisition::{propose_batch, qucb_estimate, qucb_score, AcquisitionConfig, BatchProposal};
pub use campaign::{
    run, run_campaign, run_grid_baseline, run_random_baseline, BetaSchedule, CampaignConfig, CampaignRecord,
    IterationRecord, Strategy,
};
pub use error::{Error, Result};
pub use geometry::{AngleBounds, NormalizedPoint, SphereConfig, Viewpoint};
pub use simulator::{EvaluationResult, Landscape, Preset, RolloutConfig};
pub use surrogate::{GpPosterior, KernelParams, Observation};
pub use theory::{information_gain, regret_report, RegretReport};
