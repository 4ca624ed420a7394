//! Adaptive experience selection: a learned sampling distribution over a
//! replay buffer that minimizes the variance of off-policy gradient estimates.

pub mod env;
pub mod error;
pub mod estimators;
pub mod oracle;
pub mod policy;
pub mod regret;
pub mod sampler;
pub mod simplex;
pub mod store;
pub mod sum_tree;
pub mod training;
pub mod trajectory;

pub use error::{AesError, Result};
pub use sampler::{ResetMode, SamplerConfig, SamplerState};
pub use simplex::SimplexDistribution;
pub use store::WeightedStore;
