//! Samples a group from a random tabular policy and shows its exact
//! log-probabilities and KL divergence from a uniform reference.
//!
//! `cargo run --release --example policy_sampling`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::env::{EnvConfig, Environment};
use adcraft::policy::{init_policy, kl_next_token, log_prob, prompt_history, sample_rollouts};

fn main() -> adcraft::Result<()> {
    let env = Environment::build(&EnvConfig::default(), 0)?;
    let vocab = &env.vocab;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let policy = init_policy(vocab, 1, 2.0, &mut rng)?;
    let reference = init_policy(vocab, 1, 0.0, &mut rng)?;
    println!(
        "order {} policy over {} tokens: {} contexts",
        policy.order(),
        policy.vocab_size(),
        policy.num_contexts()
    );

    let prompt = env.sample_prompt(0, &mut rng);
    let group = sample_rollouts(&policy, &reference, &prompt, 5, env.max_len, vocab.special.eos, &mut rng)?;
    println!("bidword {}", vocab.render(&[prompt.bidword_id]));
    for r in &group.rollouts {
        let recomputed = log_prob(&policy, &prompt, &r.tokens)?;
        let drift = recomputed
            .iter()
            .zip(&r.logp_old)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        println!(
            "  {:>2} tokens, log p {:>8.3}, log p_ref {:>8.3}, recompute drift {drift:.1e}: {}",
            r.len(),
            r.logp_old.iter().sum::<f64>(),
            r.logp_ref.iter().sum::<f64>(),
            vocab.render(&r.tokens)
        );
    }

    let history = prompt_history(&prompt, vocab.special.bos);
    println!("KL(policy || uniform) after the prompt: {:.4}", kl_next_token(&policy, &reference, &history)?);
    println!("KL(policy || policy): {}", kl_next_token(&policy, &policy, &history)?);
    Ok(())
}
