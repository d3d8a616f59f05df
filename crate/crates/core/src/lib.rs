//! Group-relative policy optimization of a tabular ad-text policy against a
//! multi-objective reward: structural and semantic quality rules, an
//! attributable n-gram diversity penalty and a learned CTR/CTCVR predictor,
//! with risk and diversity penalties optionally credited per token.
//!
//! Module map:
//! - [`env`]: vocabulary, prompts, features and the ground-truth CTCVR oracle
//! - [`policy`]: the order-k softmax language model and its closed-form
//!   gradients
//! - [`rewards`]: reward components, the diversity tracker and the predictor
//! - [`credit`]: sentence- and token-level advantages
//! - [`trainer`]: the clipped objective, optimizers, training and evaluation
//! - [`harness`]: the five-configuration ablation and report emission

pub mod config;
pub mod credit;
pub mod env;
pub mod harness;
pub mod error;
pub mod metrics;
pub mod policy;
pub mod rewards;
pub mod trainer;

pub use config::{load_config, AblationConfig, Granularity, ModelId, TrainConfig};
pub use error::{Error, Result};
