//! Ablation runner and report emission.

mod ablation;
mod report;

pub use ablation::{
    run_ablation, run_ablation_with, AblationReport, CellOutcome, CellResult, Comparison, Relation, SeedComparison,
};
pub use report::{config_hash, emit_report, load_report, render_text};

use crate::config::TrainConfig;
use crate::env::{label_dataset, Environment, OracleDataset};
use crate::error::Result;
use crate::rewards::{train_ctcvr_predictor, CtcvrPredictor};
use crate::trainer::stream_rng;

const STREAM_DATASET: u64 = 16;

/// Environment and reward model shared by every configuration under one seed.
#[derive(Debug, Clone)]
pub struct SeedSetup {
    pub env: Environment,
    pub predictor: CtcvrPredictor,
}

/// The oracle-labeled predictor training set for `seed`.
pub fn training_dataset(config: &TrainConfig, env: &Environment, seed: u64) -> Result<OracleDataset> {
    let mut rng = stream_rng(seed, STREAM_DATASET);
    label_dataset(env, config.predictor.train_rows, &mut rng)
}

/// Builds the environment for `seed` and fits the CTCVR predictor on
/// `config.predictor.train_rows` oracle-labeled texts.
pub fn prepare_seed(config: &TrainConfig, seed: u64) -> Result<SeedSetup> {
    let env = Environment::build(&config.env, seed)?;
    let data = training_dataset(config, &env, seed)?;
    let predictor = train_ctcvr_predictor(&data, &config.predictor, seed)?;
    Ok(SeedSetup { env, predictor })
}
