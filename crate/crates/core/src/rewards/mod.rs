//! Multi-dimensional reward system.
//!
//! Every rollout is scored on all components regardless of configuration so
//! that curves can track them. [`aggregate_reward`] then routes the active
//! components: sentence-level ones into a weighted scalar, and under token
//! granularity the risk and diversity indicators into a per-token reward
//! vector instead of the scalar.

pub mod diversity;
pub mod predictor;
pub mod quality;

use serde::{Deserialize, Serialize};

pub use diversity::{DiversityPenalty, DiversityTracker};
pub use predictor::{train_ctcvr_predictor, CtcvrPredictor, PredictorOutput};
pub use quality::{correctness_reward, format_reward, length_reward, relevance_reward, risk_scan};

use crate::config::{AblationConfig, CreditParams, RewardWeights};
use crate::credit::token_reward_vector;
use crate::env::{content, CtcvrScorer, Environment, Prompt, TokenId};
use crate::error::{Error, Result};

/// Raw per-rollout measurements, independent of the reward configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub length: f64,
    pub format: f64,
    pub relevance: f64,
    pub correctness: f64,
    pub risk_tokens: Vec<f64>,
    pub diversity_scalar: f64,
    pub diversity_tokens: Vec<f64>,
    pub ctcvr: f64,
}

impl RewardComponents {
    pub fn risk_count(&self) -> f64 {
        self.risk_tokens.iter().sum()
    }

    /// Mean of the length and format rewards, in `[-1, 1]`.
    pub fn structural(&self) -> f64 {
        (self.length + self.format) / 2.0
    }

    /// Mean of relevance, correctness mapped to `{0, 1}`, and a
    /// blacklist-free indicator; in `[0, 1]`.
    pub fn semantic(&self) -> f64 {
        let risk_free = if self.risk_count() == 0.0 { 1.0 } else { 0.0 };
        (self.relevance + (1.0 + self.correctness) + risk_free) / 3.0
    }

    /// Passes the synthetic compliance screen: no blacklisted token and a
    /// valid title/description template.
    pub fn compliant(&self) -> bool {
        self.risk_count() == 0.0 && self.format > 0.0
    }
}

/// Components plus their routed totals for one rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub components: RewardComponents,
    /// Weighted sum of the active sentence-level components.
    pub total_sentence: f64,
    /// Per-token rewards; all zero unless risk/diversity are credited per token.
    pub token_rewards: Vec<f64>,
}

impl RewardBreakdown {
    /// Sentence scalar plus the summed token rewards.
    pub fn total(&self) -> f64 {
        self.total_sentence + self.token_rewards.iter().sum::<f64>()
    }
}

/// Scores rollouts against one environment, one CTCVR scorer and the current
/// n-gram statistics.
pub struct RewardContext<'a> {
    pub env: &'a Environment,
    pub scorer: &'a dyn CtcvrScorer,
    pub tracker: &'a DiversityTracker,
}

impl RewardContext<'_> {
    pub fn components(&self, prompt: &Prompt, tokens: &[TokenId]) -> Result<RewardComponents> {
        let vocab = &self.env.vocab;
        let eos = vocab.special.eos;
        let text = content(tokens, eos);
        let features = self.env.featurize(prompt, tokens);
        // EOS is a stop action, not content: it never completes an n-gram.
        let mut diversity = self.tracker.diversity_penalty(text);
        diversity.marks.resize(tokens.len(), 0.0);
        Ok(RewardComponents {
            length: length_reward(text.len(), self.env.interval),
            format: format_reward(tokens, vocab),
            relevance: relevance_reward(prompt, tokens, eos),
            correctness: correctness_reward(tokens, vocab),
            risk_tokens: risk_scan(tokens, vocab),
            diversity_scalar: diversity.scalar,
            diversity_tokens: diversity.marks,
            ctcvr: self.scorer.score(&features)?,
        })
    }
}

fn check_inactive(config: &AblationConfig, weights: &RewardWeights) -> Result<()> {
    let inactive = [
        (!config.structural_quality, "length", weights.length),
        (!config.structural_quality, "format", weights.format),
        (!config.ctcvr, "ctcvr", weights.ctcvr),
        (!config.diversity, "diversity", weights.diversity),
        (!config.semantic_quality, "relevance", weights.relevance),
        (!config.semantic_quality, "correctness", weights.correctness),
        (!config.semantic_quality, "risk", weights.risk),
    ];
    for (off, name, w) in inactive {
        if off && w != 0.0 {
            return Err(Error::Config(format!(
                "weight for inactive component `{name}` must be 0 under {} (got {w})",
                config.id
            )));
        }
    }
    Ok(())
}

/// Routes components per the ablation row.
///
/// Sentence granularity: risk enters the scalar as `-lambda_risk * count` and
/// diversity as its penalty scalar, each times its weight. Token granularity:
/// both leave the scalar and become `-lambda_risk * risk_t -
/// lambda_diversity * marks_t`. `weights` must already be zero for inactive
/// components (see [`RewardWeights::masked`]).
pub fn aggregate_reward(
    components: RewardComponents,
    config: &AblationConfig,
    weights: &RewardWeights,
    credit: &CreditParams,
) -> Result<RewardBreakdown> {
    check_inactive(config, weights)?;
    let n = components.risk_tokens.len();
    if components.diversity_tokens.len() != n {
        return Err(Error::LengthMismatch {
            what: "risk and diversity token vectors",
            left: n,
            right: components.diversity_tokens.len(),
        });
    }
    let c = &components;
    let mut total = 0.0;
    if config.structural_quality {
        total += weights.length * c.length + weights.format * c.format;
    }
    if config.ctcvr {
        total += weights.ctcvr * c.ctcvr;
    }
    if config.semantic_quality {
        total += weights.relevance * c.relevance + weights.correctness * c.correctness;
    }
    let token_rewards = if config.token_level() {
        let zeros = vec![0.0; n];
        let risk = if config.semantic_quality { &c.risk_tokens } else { &zeros };
        let div = if config.diversity { &c.diversity_tokens } else { &zeros };
        token_reward_vector(risk, div, credit.lambda_risk, credit.lambda_diversity)?
    } else {
        if config.diversity {
            total += weights.diversity * c.diversity_scalar;
        }
        if config.semantic_quality {
            total += weights.risk * (-credit.lambda_risk * c.risk_count());
        }
        vec![0.0; n]
    };
    Ok(RewardBreakdown {
        components,
        total_sentence: total,
        token_rewards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelId;

    fn components() -> RewardComponents {
        RewardComponents {
            length: 1.0,
            format: -1.0,
            relevance: 0.5,
            correctness: -1.0,
            risk_tokens: vec![0.0, 1.0, 0.0, 1.0],
            diversity_scalar: -0.3,
            diversity_tokens: vec![0.0, 0.0, 2.0, 1.0],
            ctcvr: 0.2,
        }
    }

    fn agg(id: ModelId) -> RewardBreakdown {
        let cfg = AblationConfig::row(id);
        let w = RewardWeights::default().masked(&cfg);
        aggregate_reward(components(), &cfg, &w, &CreditParams::default()).unwrap()
    }

    #[test]
    fn model1_uses_structural_only() {
        let b = agg(ModelId::Model1);
        assert_eq!(b.total_sentence, 0.0);
        assert!(b.token_rewards.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn sentence_rows_accumulate_progressively() {
        assert!((agg(ModelId::Model2).total_sentence - 0.2).abs() < 1e-15);
        assert!((agg(ModelId::Model3).total_sentence - (0.2 - 0.3)).abs() < 1e-15);
        // + relevance 0.5 + correctness -1 + risk -0.5 * 2
        let expected = 0.2 - 0.3 + 0.5 - 1.0 - 1.0;
        assert!((agg(ModelId::Model4).total_sentence - expected).abs() < 1e-12);
    }

    #[test]
    fn relate_routes_risk_and_diversity_to_tokens() {
        let b = agg(ModelId::Relate);
        assert!((b.total_sentence - (0.2 + 0.5 - 1.0)).abs() < 1e-12);
        let expected = [0.0, -0.5, -0.2, -0.6];
        for (got, want) in b.token_rewards.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        // same total penalty as the sentence-level routing
        let m4 = agg(ModelId::Model4);
        assert!((b.total() - m4.total()).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_total() {
        let cfg = AblationConfig::row(ModelId::Model4);
        let b = aggregate_reward(
            components(),
            &cfg,
            &RewardWeights::uniform(0.0),
            &CreditParams::default(),
        )
        .unwrap();
        assert_eq!(b.total_sentence, 0.0);
    }

    #[test]
    fn nonzero_weight_on_inactive_component_is_rejected() {
        let cfg = AblationConfig::row(ModelId::Model1);
        let err = aggregate_reward(
            components(),
            &cfg,
            &RewardWeights::default(),
            &CreditParams::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn summary_scores() {
        let c = components();
        assert_eq!(c.structural(), 0.0);
        assert!((c.semantic() - 0.5 / 3.0).abs() < 1e-15);
        assert!(!c.compliant());
    }
}
