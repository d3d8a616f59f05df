//! Run configuration: the five reward configurations of the ablation, reward
//! weights, credit-assignment constants, and the full training config with
//! key-path validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    Model1,
    Model2,
    Model3,
    Model4,
    #[serde(rename = "RELATE")]
    Relate,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::Model1,
        ModelId::Model2,
        ModelId::Model3,
        ModelId::Model4,
        ModelId::Relate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelId::Model1 => "Model1",
            ModelId::Model2 => "Model2",
            ModelId::Model3 => "Model3",
            ModelId::Model4 => "Model4",
            ModelId::Relate => "RELATE",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Token,
}

/// Which reward components are active and how risk/diversity are credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub id: ModelId,
    pub structural_quality: bool,
    pub ctcvr: bool,
    pub diversity: bool,
    pub semantic_quality: bool,
    pub credit_assignment: bool,
    pub granularity: Granularity,
}

impl AblationConfig {
    /// The canonical row for `id`. Each model adds one component on top of
    /// the previous one; only RELATE routes risk and diversity per token.
    pub fn row(id: ModelId) -> Self {
        let rank = ModelId::ALL.iter().position(|m| *m == id).unwrap_or(0);
        Self {
            id,
            structural_quality: true,
            ctcvr: rank >= 1,
            diversity: rank >= 2,
            semantic_quality: rank >= 3,
            credit_assignment: rank >= 4,
            granularity: if id == ModelId::Relate {
                Granularity::Token
            } else {
                Granularity::Sentence
            },
        }
    }

    pub fn all() -> [Self; 5] {
        ModelId::ALL.map(Self::row)
    }

    pub fn token_level(&self) -> bool {
        self.granularity == Granularity::Token
    }

    pub fn validate(&self) -> Result<()> {
        if (self.granularity == Granularity::Token) != (self.id == ModelId::Relate) {
            return Err(Error::ConfigField {
                path: "ablation.granularity".into(),
                message: format!(
                    "{} requires {} granularity",
                    self.id,
                    if self.id == ModelId::Relate { "token" } else { "sentence" }
                ),
            });
        }
        if *self != Self::row(self.id) {
            return Err(Error::ConfigField {
                path: "ablation".into(),
                message: format!("component flags do not match the {} row", self.id),
            });
        }
        Ok(())
    }
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::row(ModelId::Relate)
    }
}

fn one() -> f64 {
    1.0
}

/// Weighted-sum coefficients of the sentence-level reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    #[serde(default = "one")]
    pub length: f64,
    #[serde(default = "one")]
    pub format: f64,
    #[serde(default = "one")]
    pub ctcvr: f64,
    #[serde(default = "one")]
    pub diversity: f64,
    #[serde(default = "one")]
    pub relevance: f64,
    #[serde(default = "one")]
    pub correctness: f64,
    #[serde(default = "one")]
    pub risk: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl RewardWeights {
    pub fn uniform(w: f64) -> Self {
        Self {
            length: w,
            format: w,
            ctcvr: w,
            diversity: w,
            relevance: w,
            correctness: w,
            risk: w,
        }
    }

    /// Copy with every component that `config` disables set to zero.
    pub fn masked(&self, config: &AblationConfig) -> Self {
        let keep = |on: bool, w: f64| if on { w } else { 0.0 };
        Self {
            length: keep(config.structural_quality, self.length),
            format: keep(config.structural_quality, self.format),
            ctcvr: keep(config.ctcvr, self.ctcvr),
            diversity: keep(config.diversity, self.diversity),
            relevance: keep(config.semantic_quality, self.relevance),
            correctness: keep(config.semantic_quality, self.correctness),
            risk: keep(config.semantic_quality, self.risk),
        }
    }

    fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("length", self.length),
            ("format", self.format),
            ("ctcvr", self.ctcvr),
            ("diversity", self.diversity),
            ("relevance", self.relevance),
            ("correctness", self.correctness),
            ("risk", self.risk),
        ]
    }
}

/// Token-level penalty and mixing constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreditParams {
    /// Weight of token-determined advantages relative to the sentence term.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Penalty per blacklisted token.
    #[serde(default = "default_lambda_risk")]
    pub lambda_risk: f64,
    /// Penalty per completed high-frequency n-gram.
    #[serde(default = "default_lambda_diversity")]
    pub lambda_diversity: f64,
}

fn default_alpha() -> f64 {
    1.0
}
fn default_lambda_risk() -> f64 {
    0.5
}
fn default_lambda_diversity() -> f64 {
    0.1
}

impl Default for CreditParams {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            lambda_risk: default_lambda_risk(),
            lambda_diversity: default_lambda_diversity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatsWindow {
    /// Counts are reset before every training batch.
    Batch,
    /// Counts accumulate over the whole run.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiversityConfig {
    #[serde(default = "default_delta_d")]
    pub delta_d: f64,
    /// Occurrences within the window at which an n-gram counts as high-frequency.
    #[serde(default = "default_threshold")]
    pub threshold: u32,
    #[serde(default = "default_min_n")]
    pub min_n: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_window")]
    pub window: StatsWindow,
}

fn default_delta_d() -> f64 {
    0.1
}
fn default_threshold() -> u32 {
    3
}
fn default_min_n() -> usize {
    2
}
fn default_max_n() -> usize {
    10
}
fn default_window() -> StatsWindow {
    StatsWindow::Batch
}

impl Default for DiversityConfig {
    fn default() -> Self {
        Self {
            delta_d: default_delta_d(),
            threshold: default_threshold(),
            min_n: default_min_n(),
            max_n: default_max_n(),
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_pred_epochs")]
    pub epochs: usize,
    #[serde(default = "default_pred_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_pred_batch")]
    pub batch_size: usize,
    #[serde(default = "default_train_rows")]
    pub train_rows: usize,
}

fn default_hidden() -> usize {
    16
}
fn default_pred_epochs() -> usize {
    8
}
fn default_pred_lr() -> f64 {
    0.01
}
fn default_pred_batch() -> usize {
    256
}
fn default_train_rows() -> usize {
    100_000
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            epochs: default_pred_epochs(),
            learning_rate: default_pred_lr(),
            batch_size: default_pred_batch(),
            train_rows: default_train_rows(),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_group_size")]
    pub group_size: usize,
    #[serde(default = "default_batch_prompts")]
    pub batch_prompts: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Step at which final metrics are reported; defaults to `steps`.
    #[serde(default)]
    pub report_step: Option<usize>,
    #[serde(default = "default_clip_eps")]
    pub clip_eps: f64,
    #[serde(default = "default_kl_beta")]
    pub kl_beta: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_inner_epochs")]
    pub inner_epochs: usize,
    /// Divide each rollout's token sum by its length.
    #[serde(default = "default_true")]
    pub length_norm: bool,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_eval_prompts")]
    pub eval_prompts: usize,
    /// Write `ckpt_<step>.json` every this many steps; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub weights: RewardWeights,
    #[serde(default)]
    pub credit: CreditParams,
    #[serde(default)]
    pub diversity: DiversityConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
}

fn default_group_size() -> usize {
    5
}
fn default_batch_prompts() -> usize {
    64
}
fn default_steps() -> usize {
    150
}
fn default_clip_eps() -> f64 {
    0.2
}
fn default_kl_beta() -> f64 {
    0.01
}
fn default_lr() -> f64 {
    0.05
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Sgd
}
fn default_inner_epochs() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_order() -> usize {
    2
}
fn default_init_scale() -> f64 {
    0.0
}
fn default_eval_prompts() -> usize {
    64
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn field(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigField {
        path: path.into(),
        message: message.into(),
    }
}

impl TrainConfig {
    pub fn report_step(&self) -> usize {
        self.report_step.unwrap_or(self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(field("group_size", "must be at least 2"));
        }
        if self.batch_prompts == 0 {
            return Err(field("batch_prompts", "must be at least 1"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(field("clip_eps", format!("must lie in (0, 1), got {}", self.clip_eps)));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(field("kl_beta", "must be finite and >= 0"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(field("learning_rate", "must be finite and > 0"));
        }
        if self.inner_epochs == 0 {
            return Err(field("inner_epochs", "must be at least 1"));
        }
        if !(1..=3).contains(&self.order) {
            return Err(field("order", "must be 1, 2 or 3"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(field("init_scale", "must be finite and >= 0"));
        }
        if self.eval_prompts == 0 {
            return Err(field("eval_prompts", "must be at least 1"));
        }
        if self.report_step() > self.steps {
            return Err(field("report_step", "must not exceed steps"));
        }
        self.ablation.validate()?;
        for (name, w) in self.weights.entries() {
            if !w.is_finite() {
                return Err(field(&format!("weights.{name}"), "must be finite"));
            }
        }
        for (name, v) in [
            ("credit.alpha", self.credit.alpha),
            ("credit.lambda_risk", self.credit.lambda_risk),
            ("credit.lambda_diversity", self.credit.lambda_diversity),
            ("diversity.delta_d", self.diversity.delta_d),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(field(name, "must be finite and >= 0"));
            }
        }
        if self.diversity.threshold == 0 {
            return Err(field("diversity.threshold", "must be at least 1"));
        }
        if self.diversity.min_n < 1 || self.diversity.max_n < self.diversity.min_n {
            return Err(field("diversity.max_n", "requires 1 <= min_n <= max_n"));
        }
        let interval = self.env.length_interval;
        if interval.min < 1 || interval.max < interval.min {
            return Err(field("env.length_interval", "requires 1 <= min <= max"));
        }
        if self.env.max_len == 0 {
            return Err(field("env.max_len", "must be at least 1"));
        }
        if self.env.max_query_keywords == 0 {
            return Err(field("env.max_query_keywords", "must be at least 1"));
        }
        if self.predictor.hidden == 0 || self.predictor.batch_size == 0 || self.predictor.train_rows == 0 {
            return Err(field("predictor", "hidden, batch_size and train_rows must be at least 1"));
        }
        if !(self.predictor.learning_rate > 0.0 && self.predictor.learning_rate.is_finite()) {
            return Err(field("predictor.learning_rate", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Parses and validates a JSON config; unknown keys are rejected and every
    /// error names the offending key path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: TrainConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::ConfigField {
                path,
                message: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads, parses and validates a run config file.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TrainConfig::from_json_str(&text)
}
