//! Trains one reward configuration and prints its learning curve and a
//! few samples from the trained policy.
//!
//! `cargo run --release --example train_policy -- [config.json]`

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::harness::prepare_seed;
use adcraft::policy::sample_rollouts;
use adcraft::trainer::{train, RunOutputs};
use adcraft::{load_config, TrainConfig};

fn main() -> adcraft::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => load_config(std::path::Path::new(&path))?,
        None => TrainConfig::default(),
    };
    let start = Instant::now();
    let setup = prepare_seed(&config, config.seed)?;
    println!("setup: {:.1}s", start.elapsed().as_secs_f64());

    let run = train(&config, &setup.env, &setup.predictor, &setup.env.oracle, &RunOutputs::default())?;
    println!("step  structural  ctcvr   diversity  semantic  total    kl       compliance");
    let every = (config.steps / 15).max(1);
    for log in run.logs.iter().filter(|l| l.step % every == 0 || l.step == config.steps) {
        println!(
            "{:>4}  {:>10.4}  {:.4}  {:>9.4}  {:>8.4}  {:>7.4}  {:.5}  {:.4}",
            log.step, log.structural, log.ctcvr, log.diversity, log.semantic, log.total, log.kl, log.compliance
        );
    }
    println!("{} report metrics: {:?}", config.ablation.id, run.report);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let prompt = setup.env.sample_prompt(0, &mut rng);
    let eos = setup.env.vocab.special.eos;
    let group = sample_rollouts(&run.params, &run.reference, &prompt, 4, setup.env.max_len, eos, &mut rng)?;
    println!("bidword {}:", setup.env.vocab.render(&[prompt.bidword_id]));
    for r in &group.rollouts {
        println!("  {}", setup.env.vocab.render(&r.tokens));
    }
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
