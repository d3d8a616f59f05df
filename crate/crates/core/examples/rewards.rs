//! Scores a batch of random texts on every reward component and shows how
//! sentence-level and token-level configurations route risk and diversity.
//!
//! `cargo run --release --example rewards`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::config::{AblationConfig, CreditParams, DiversityConfig, ModelId, RewardWeights};
use adcraft::env::{content, random_text, EnvConfig, Environment};
use adcraft::rewards::{aggregate_reward, DiversityTracker, RewardContext};

fn main() -> adcraft::Result<()> {
    let env = Environment::build(&EnvConfig::default(), 0)?;
    let vocab = &env.vocab;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let prompt = env.sample_prompt(0, &mut rng);
    let texts: Vec<Vec<usize>> = (0..8).map(|_| random_text(vocab, &prompt, 16, &mut rng)).collect();

    let mut tracker = DiversityTracker::new(DiversityConfig {
        threshold: 2,
        ..DiversityConfig::default()
    });
    tracker.update_ngram_stats(texts.iter().map(|t| content(t, vocab.special.eos)));
    println!("{} distinct n-grams, {} high-frequency", tracker.distinct_ngrams(), tracker.high_frequency().len());

    let ctx = RewardContext {
        env: &env,
        scorer: &env.oracle,
        tracker: &tracker,
    };
    let credit = CreditParams::default();
    for text in &texts {
        let c = ctx.components(&prompt, text)?;
        println!();
        println!("{}", vocab.render(text));
        println!(
            "  length {:+.2} format {:+.0} relevance {:.2} correctness {:+.0} risk {} diversity {:+.2} ctcvr {:.4}",
            c.length,
            c.format,
            c.relevance,
            c.correctness,
            c.risk_count(),
            c.diversity_scalar,
            c.ctcvr
        );
        for id in [ModelId::Model4, ModelId::Relate] {
            let config = AblationConfig::row(id);
            let weights = RewardWeights::default().masked(&config);
            let r = aggregate_reward(c.clone(), &config, &weights, &credit)?;
            println!("  {id:<7} sentence {:+.3} token {:?}", r.total_sentence, r.token_rewards);
        }
    }
    Ok(())
}
