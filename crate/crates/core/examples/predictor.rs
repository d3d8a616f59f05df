//! Fits the shared-bottom CTR/CTCVR predictor on oracle-labelled texts and
//! measures how well it ranks held-out texts by true CTCVR.
//!
//! `cargo run --release --example predictor -- [rows]`

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::env::{label_dataset, oracle_ctcvr, EnvConfig, Environment};
use adcraft::metrics::ranking_auc;
use adcraft::rewards::train_ctcvr_predictor;
use adcraft::TrainConfig;

fn main() -> adcraft::Result<()> {
    let mut config = TrainConfig::default();
    if let Some(rows) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        config.predictor.train_rows = rows;
    }
    let env = Environment::build(&EnvConfig::default(), 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = label_dataset(&env, config.predictor.train_rows, &mut rng)?;
    let clicks = data.rows.iter().filter(|r| r.click).count();
    let conversions = data.rows.iter().filter(|r| r.conversion).count();
    println!("{} rows, {clicks} clicks, {conversions} conversions", data.len());

    let start = Instant::now();
    let model = train_ctcvr_predictor(&data, &config.predictor, 0)?;
    println!("trained {} parameters in {:.1}s", model.num_params(), start.elapsed().as_secs_f64());

    let held_out = label_dataset(&env, 10_000, &mut rng)?;
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    let mut chain_ok = true;
    for row in &held_out.rows {
        let out = model.forward(&row.features)?;
        chain_ok &= out.ctcvr <= out.ctr;
        predicted.push(out.ctcvr);
        truth.push(oracle_ctcvr(&env.oracle, &row.features)?.ctcvr);
    }
    println!("held-out ranking AUC vs oracle CTCVR: {:.4}", ranking_auc(&predicted, &truth)?);
    println!("ctcvr <= ctr on every held-out row: {chain_ok}");
    Ok(())
}
