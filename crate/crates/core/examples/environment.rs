//! Builds the synthetic environment for a seed and scores a few random texts
//! under the ground-truth oracle.
//!
//! `cargo run --release --example environment -- [seed]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::env::{oracle_ctcvr, random_text, EnvConfig, Environment, FEATURE_NAMES};

fn main() -> adcraft::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let env = Environment::build(&EnvConfig::default(), seed)?;
    let v = &env.vocab;
    println!(
        "vocabulary: {} tokens ({} keywords, {} calls to action, {} blacklisted, {} fillers, {} contradiction pairs)",
        v.len(),
        v.keyword_ids.len(),
        v.cta_ids.len(),
        v.blacklist_ids.len(),
        v.filler_ids.len(),
        v.contradiction_pairs.len()
    );
    println!("oracle ctr weights {:.3?}", env.oracle.w_ctr);
    println!("oracle cvr weights {:.3?}", env.oracle.w_cvr);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in 0..3 {
        let prompt = env.sample_prompt(id, &mut rng);
        let text = random_text(v, &prompt, env.max_len, &mut rng);
        let features = env.featurize(&prompt, &text);
        let p = oracle_ctcvr(&env.oracle, &features)?;
        println!();
        println!("query {} / bidword {}", v.render(&prompt.query_keyword_ids), v.render(&[prompt.bidword_id]));
        println!("text  {}", v.render(&text));
        for (name, x) in FEATURE_NAMES.iter().zip(&features) {
            println!("  {name:<18} {x:+.3}");
        }
        println!("  oracle ctr {:.4}, ctcvr {:.4}", p.ctr, p.ctcvr);
    }
    Ok(())
}
