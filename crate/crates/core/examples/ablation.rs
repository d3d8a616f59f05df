//! Runs the five reward configurations over a seed sweep and prints the
//! report.
//!
//! `cargo run --release --example ablation -- [config.json] [seeds...]`

use std::time::Instant;

use adcraft::harness::{render_text, run_ablation};
use adcraft::{load_config, TrainConfig};

fn main() -> adcraft::Result<()> {
    let mut args = std::env::args().skip(1).peekable();
    let config = match args.peek() {
        Some(a) if a.ends_with(".json") => load_config(std::path::Path::new(&args.next().unwrap()))?,
        _ => TrainConfig::default(),
    };
    let mut seeds: Vec<u64> = args.filter_map(|a| a.parse().ok()).collect();
    if seeds.is_empty() {
        seeds = vec![0];
    }
    let start = Instant::now();
    let report = run_ablation(&config, &seeds, None)?;
    print!("{}", render_text(&report));
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
