//! Turns one group's rewards into sentence-level, token-level and combined
//! per-token advantages.
//!
//! `cargo run --release --example credit_assignment`

use adcraft::credit::{combine_advantages, sentence_advantage, token_advantage, token_reward_vector};

fn main() -> adcraft::Result<()> {
    let sentence_rewards = [1.4, 0.2, -0.3, 0.9, 0.2];
    let sentence = sentence_advantage(&sentence_rewards)?;
    println!("sentence rewards    {sentence_rewards:?}");
    println!("sentence advantages {sentence:.4?}");

    // per position: blacklist hit and number of completed high-frequency n-grams
    let marks: [(&[f64], &[f64]); 5] = [
        (&[0.0, 1.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0]),
        (&[0.0, 0.0, 0.0], &[0.0, 1.0, 2.0]),
        (&[0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 5]),
        (&[1.0, 0.0], &[0.0, 1.0]),
        (&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]),
    ];
    let (alpha, lambda_risk, lambda_diversity) = (1.0, 0.5, 0.1);
    let token: Vec<Vec<f64>> = marks
        .iter()
        .map(|(risk, div)| Ok(token_advantage(&token_reward_vector(risk, div, lambda_risk, lambda_diversity)?, alpha)))
        .collect::<adcraft::Result<_>>()?;
    let combined = combine_advantages(0, &sentence, &token)?;
    for (i, row) in combined.per_rollout.iter().enumerate() {
        println!("rollout {i}: token {:+.2?} -> combined {:+.4?}", token[i], row);
    }
    Ok(())
}
