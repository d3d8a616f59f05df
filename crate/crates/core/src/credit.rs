//! Granularity-aware credit assignment.
//!
//! Sentence-level rewards become one group-normalized advantage per rollout;
//! token-level rewards become per-position advantages scaled by `alpha`. The
//! final per-token advantage is their sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Groups whose reward standard deviation falls below this get zero
/// advantages; above it the division is exact, so normalized groups have unit
/// standard deviation.
pub const EPS_DEGENERATE: f64 = 1e-12;

/// `r_t = -lambda_risk * risk_t - lambda_diversity * diversity_t`.
pub fn token_reward_vector(
    risk_tokens: &[f64],
    diversity_tokens: &[f64],
    lambda_risk: f64,
    lambda_diversity: f64,
) -> Result<Vec<f64>> {
    if risk_tokens.len() != diversity_tokens.len() {
        return Err(Error::LengthMismatch {
            what: "risk and diversity indicators",
            left: risk_tokens.len(),
            right: diversity_tokens.len(),
        });
    }
    Ok(risk_tokens
        .iter()
        .zip(diversity_tokens)
        .map(|(r, d)| -lambda_risk * r - lambda_diversity * d)
        .collect())
}

pub fn token_advantage(token_rewards: &[f64], alpha: f64) -> Vec<f64> {
    token_rewards.iter().map(|r| alpha * r).collect()
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Group-relative advantages `(r_i - mean) / std` with the population
/// standard deviation; all zeros for a degenerate group.
pub fn sentence_advantage(group_rewards: &[f64]) -> Result<Vec<f64>> {
    if group_rewards.len() < 2 {
        return Err(Error::Precondition(format!(
            "sentence advantages need at least 2 rewards (got {})",
            group_rewards.len()
        )));
    }
    let (mean, std) = mean_std(group_rewards);
    if !(std >= EPS_DEGENERATE) {
        return Ok(vec![0.0; group_rewards.len()]);
    }
    Ok(group_rewards
        .iter()
        .map(|r| (r - mean) / std)
        .collect())
}

/// Per-rollout, per-token advantages for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageTensor {
    pub group_id: u64,
    pub per_rollout: Vec<Vec<f64>>,
}

/// `A_{i,t} = A_i^sentence + A_{i,t}^token`.
pub fn combine_advantages(
    group_id: u64,
    sentence: &[f64],
    token: &[Vec<f64>],
) -> Result<AdvantageTensor> {
    if sentence.len() != token.len() {
        return Err(Error::LengthMismatch {
            what: "sentence advantages and token advantage vectors",
            left: sentence.len(),
            right: token.len(),
        });
    }
    let per_rollout: Vec<Vec<f64>> = sentence
        .iter()
        .zip(token)
        .map(|(s, toks)| toks.iter().map(|t| s + t).collect())
        .collect();
    for (i, row) in per_rollout.iter().enumerate() {
        if let Some(t) = row.iter().position(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                what: "advantage",
                rollout: i,
                position: t,
            });
        }
    }
    Ok(AdvantageTensor {
        group_id,
        per_rollout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_indicators_give_zero_rewards() {
        assert_eq!(
            token_reward_vector(&[0.0; 4], &[0.0; 4], 0.5, 0.1).unwrap(),
            vec![0.0; 4]
        );
    }

    #[test]
    fn risk_and_both_marks() {
        let r = token_reward_vector(&[0.0, 0.0, 1.0, 0.0, 1.0], &[0.0, 0.0, 0.0, 0.0, 1.0], 0.5, 0.1)
            .unwrap();
        assert_eq!(r[2], -0.5);
        assert!((r[4] + 0.6).abs() < 1e-15);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[3], 0.0);
    }

    #[test]
    fn mismatched_indicator_lengths() {
        assert!(token_reward_vector(&[0.0; 3], &[0.0; 4], 0.5, 0.1).is_err());
    }

    #[test]
    fn token_advantage_scaling() {
        assert_eq!(token_advantage(&[-0.5, 0.0], 0.0), vec![0.0, 0.0]);
        assert_eq!(token_advantage(&[-0.5], 2.0), vec![-1.0]);
        let r = [0.3, -0.7, 1.1];
        let doubled: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        let lhs = token_advantage(&doubled, 1.5);
        let rhs: Vec<f64> = token_advantage(&r, 1.5).iter().map(|x| 2.0 * x).collect();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn one_two_three() {
        let a = sentence_advantage(&[1.0, 2.0, 3.0]).unwrap();
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((a[0] + expected).abs() < 1e-3);
        assert_eq!(a[1], 0.0);
        assert!((a[2] - expected).abs() < 1e-3);
        assert!((a[2] - 1.2247).abs() < 1e-3);
    }

    #[test]
    fn equal_rewards_are_degenerate() {
        assert_eq!(sentence_advantage(&[0.7; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn singleton_group_rejected() {
        assert!(sentence_advantage(&[1.0]).is_err());
    }

    #[test]
    fn combine_broadcasts_sentence_term() {
        let t = combine_advantages(0, &[0.5], &[vec![0.0, 0.0, 0.0, -1.0, 0.0]]).unwrap();
        assert_eq!(t.per_rollout[0], vec![0.5, 0.5, 0.5, -0.5, 0.5]);
        let t = combine_advantages(0, &[0.25, -0.25], &[vec![0.0; 2], vec![0.0; 3]]).unwrap();
        assert_eq!(t.per_rollout[1], vec![-0.25; 3]);
    }

    #[test]
    fn combine_shape_mismatch() {
        assert!(combine_advantages(0, &[0.1, 0.2], &[vec![0.0]]).is_err());
    }
}
