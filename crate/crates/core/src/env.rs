//! Synthetic advertising environment.
//!
//! A vocabulary partitioned into semantic classes (product keywords,
//! call-to-action words, risky blacklisted words, filler), prompts made of a
//! query and a bidword, an interpretable feature map over generated texts,
//! and a hidden two-sigmoid conversion oracle that plays the role of online
//! CTR/CTCVR. The oracle also labels entire-space datasets used to fit the
//! learned conversion predictor.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = usize;

/// Number of entries produced by [`featurize`].
pub const FEATURE_DIM: usize = 6;

/// Column names of the feature vector, in order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "coverage",
    "bidword",
    "cta",
    "length_dev",
    "blacklist",
    "distinct_bigrams",
];

/// Upper bound on the total vocabulary size.
pub const MAX_VOCAB: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub bos: TokenId,
    pub eos: TokenId,
    pub sep: TokenId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Special,
    Keyword,
    Cta,
    Blacklist,
    Filler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabConfig {
    pub keywords: usize,
    pub cta: usize,
    pub blacklist: usize,
    pub filler: usize,
    /// Number of mutually exclusive filler-token pairs used by the
    /// correctness check.
    #[serde(default = "default_contradiction_pairs")]
    pub contradiction_pairs: usize,
    #[serde(default = "default_true")]
    pub risk_control: bool,
}

fn default_contradiction_pairs() -> usize {
    4
}

fn default_true() -> bool {
    true
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            keywords: 20,
            cta: 10,
            blacklist: 5,
            filler: 160,
            contradiction_pairs: default_contradiction_pairs(),
            risk_control: true,
        }
    }
}

/// On-disk shape of a [`Vocabulary`]; validated on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyRecord {
    seed: u64,
    tokens: Vec<String>,
    special: SpecialTokens,
    keyword_ids: Vec<TokenId>,
    cta_ids: Vec<TokenId>,
    blacklist_ids: Vec<TokenId>,
    filler_ids: Vec<TokenId>,
    contradiction_pairs: Vec<(TokenId, TokenId)>,
    risk_control: bool,
}

/// Token table with disjoint semantic classes.
///
/// Indices are dense in `0..len()`. Specials occupy `0..3`; every other
/// token belongs to exactly one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRecord", into = "VocabularyRecord")]
pub struct Vocabulary {
    pub seed: u64,
    pub tokens: Vec<String>,
    pub special: SpecialTokens,
    pub keyword_ids: Vec<TokenId>,
    pub cta_ids: Vec<TokenId>,
    pub blacklist_ids: Vec<TokenId>,
    pub filler_ids: Vec<TokenId>,
    pub contradiction_pairs: Vec<(TokenId, TokenId)>,
    pub risk_control: bool,
    classes: Vec<TokenClass>,
}

impl From<Vocabulary> for VocabularyRecord {
    fn from(v: Vocabulary) -> Self {
        VocabularyRecord {
            seed: v.seed,
            tokens: v.tokens,
            special: v.special,
            keyword_ids: v.keyword_ids,
            cta_ids: v.cta_ids,
            blacklist_ids: v.blacklist_ids,
            filler_ids: v.filler_ids,
            contradiction_pairs: v.contradiction_pairs,
            risk_control: v.risk_control,
        }
    }
}

impl TryFrom<VocabularyRecord> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRecord) -> Result<Self> {
        Vocabulary::from_parts(
            r.seed,
            r.tokens,
            r.special,
            [r.keyword_ids, r.cta_ids, r.blacklist_ids, r.filler_ids],
            r.contradiction_pairs,
            r.risk_control,
        )
    }
}

impl Vocabulary {
    /// Assembles a vocabulary from explicit class lists, checking that the
    /// classes are disjoint and in range.
    pub fn from_parts(
        seed: u64,
        tokens: Vec<String>,
        special: SpecialTokens,
        [keyword_ids, cta_ids, blacklist_ids, filler_ids]: [Vec<TokenId>; 4],
        contradiction_pairs: Vec<(TokenId, TokenId)>,
        risk_control: bool,
    ) -> Result<Self> {
        let v = tokens.len();
        if v > MAX_VOCAB {
            return Err(Error::Config(format!(
                "vocabulary size {v} exceeds {MAX_VOCAB}"
            )));
        }
        let mut classes = vec![None; v];
        let mut assign = |ids: &[TokenId], class: TokenClass| -> Result<()> {
            for &id in ids {
                let slot = classes.get_mut(id).ok_or(Error::TokenOutOfRange {
                    token: id,
                    vocab_size: v,
                })?;
                if let Some(prev) = *slot {
                    return Err(Error::Config(format!(
                        "token {id} assigned to both {prev:?} and {class:?}"
                    )));
                }
                *slot = Some(class);
            }
            Ok(())
        };
        assign(&[special.bos, special.eos, special.sep], TokenClass::Special)?;
        assign(&keyword_ids, TokenClass::Keyword)?;
        assign(&cta_ids, TokenClass::Cta)?;
        assign(&blacklist_ids, TokenClass::Blacklist)?;
        assign(&filler_ids, TokenClass::Filler)?;
        let classes: Vec<TokenClass> = classes
            .into_iter()
            .map(|c| c.unwrap_or(TokenClass::Filler))
            .collect();
        if risk_control && blacklist_ids.is_empty() {
            return Err(Error::Config(
                "risk control enabled but the blacklist is empty".into(),
            ));
        }
        if keyword_ids.is_empty() {
            return Err(Error::Config("vocabulary needs at least one keyword".into()));
        }
        for &(a, b) in &contradiction_pairs {
            if a >= v || b >= v || a == b {
                return Err(Error::Config(format!("invalid contradiction pair ({a}, {b})")));
            }
        }
        Ok(Self {
            seed,
            tokens,
            special,
            keyword_ids,
            cta_ids,
            blacklist_ids,
            filler_ids,
            contradiction_pairs,
            risk_control,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn class(&self, token: TokenId) -> TokenClass {
        self.classes[token]
    }

    pub fn is_blacklisted(&self, token: TokenId) -> bool {
        self.classes.get(token) == Some(&TokenClass::Blacklist)
    }

    pub fn render(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.tokens.get(t).map(String::as_str).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Builds a vocabulary whose class-to-index assignment is shuffled by `seed`.
pub fn build_vocabulary(config: &VocabConfig, seed: u64) -> Result<Vocabulary> {
    for (name, size) in [
        ("keywords", config.keywords),
        ("cta", config.cta),
        ("filler", config.filler),
    ] {
        if size == 0 {
            return Err(Error::Config(format!("vocab.{name} must be at least 1")));
        }
    }
    if config.risk_control && config.blacklist == 0 {
        return Err(Error::Config(
            "vocab.blacklist must be at least 1 when risk control is enabled".into(),
        ));
    }
    if config.filler < 2 * config.contradiction_pairs {
        return Err(Error::Config(format!(
            "vocab.filler ({}) too small for {} contradiction pairs",
            config.filler, config.contradiction_pairs
        )));
    }
    let regular = config.keywords + config.cta + config.blacklist + config.filler;
    let total = regular + 3;
    if total > MAX_VOCAB {
        return Err(Error::Config(format!(
            "vocabulary size {total} exceeds {MAX_VOCAB}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slots: Vec<TokenId> = (3..total).collect();
    slots.shuffle(&mut rng);

    let mut tokens = vec![String::new(); total];
    tokens[0] = "<bos>".into();
    tokens[1] = "<eos>".into();
    tokens[2] = "<sep>".into();

    let mut cursor = slots.into_iter();
    let mut take = |n: usize, prefix: &str, tokens: &mut Vec<String>| -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = cursor.by_ref().take(n).collect();
        ids.sort_unstable();
        for (k, &id) in ids.iter().enumerate() {
            tokens[id] = format!("{prefix}{k:03}");
        }
        ids
    };
    let keyword_ids = take(config.keywords, "kw", &mut tokens);
    let cta_ids = take(config.cta, "cta", &mut tokens);
    let blacklist_ids = take(config.blacklist, "risk", &mut tokens);
    let filler_ids = take(config.filler, "w", &mut tokens);

    let mut pool = filler_ids.clone();
    pool.shuffle(&mut rng);
    let contradiction_pairs = pool
        .chunks_exact(2)
        .take(config.contradiction_pairs)
        .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
        .collect();

    Vocabulary::from_parts(
        seed,
        tokens,
        SpecialTokens {
            bos: 0,
            eos: 1,
            sep: 2,
        },
        [keyword_ids, cta_ids, blacklist_ids, filler_ids],
        contradiction_pairs,
        config.risk_control,
    )
}

/// Generation prompt: a user query (keyword set) plus the advertiser bidword.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: u64,
    pub query_keyword_ids: Vec<TokenId>,
    pub bidword_id: TokenId,
}

/// Samples a prompt: 1..=`max_query_keywords` distinct query keywords and a
/// uniformly drawn bidword.
pub fn sample_prompt<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    max_query_keywords: usize,
    id: u64,
    rng: &mut R,
) -> Prompt {
    let kws = &vocab.keyword_ids;
    let bound = max_query_keywords.clamp(1, kws.len());
    let n = rng.random_range(1..=bound);
    let mut query: Vec<TokenId> = rand::seq::index::sample(rng, kws.len(), n)
        .into_iter()
        .map(|i| kws[i])
        .collect();
    query.sort_unstable();
    let bidword_id = kws[rng.random_range(0..kws.len())];
    Prompt {
        id,
        query_keyword_ids: query,
        bidword_id,
    }
}

/// Target content-length interval, shared by the length reward and the
/// length-deviation feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthInterval {
    pub min: usize,
    pub max: usize,
}

impl Default for LengthInterval {
    fn default() -> Self {
        Self { min: 8, max: 24 }
    }
}

impl LengthInterval {
    pub fn validate(&self) -> Result<()> {
        if self.min < 1 || self.max < self.min {
            return Err(Error::Config(format!(
                "length interval [{}, {}] requires 1 <= min <= max",
                self.min, self.max
            )));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        (self.min + self.max) as f64 / 2.0
    }

    pub fn half_width(&self) -> f64 {
        ((self.max - self.min) as f64 / 2.0).max(1.0)
    }
}

/// Tokens of a completed generation up to (not including) the first EOS.
pub fn content(tokens: &[TokenId], eos: TokenId) -> &[TokenId] {
    match tokens.iter().position(|&t| t == eos) {
        Some(end) => &tokens[..end],
        None => tokens,
    }
}

/// Interpretable six-dimensional representation of a generated text in the
/// context of its prompt. Entries follow [`FEATURE_NAMES`] and lie in
/// `[-1, 1]`.
pub fn featurize(
    prompt: &Prompt,
    tokens: &[TokenId],
    vocab: &Vocabulary,
    interval: LengthInterval,
) -> Vec<f64> {
    let text = content(tokens, vocab.special.eos);
    let present: HashSet<TokenId> = text.iter().copied().collect();

    let coverage = if prompt.query_keyword_ids.is_empty() {
        0.0
    } else {
        let hit = prompt
            .query_keyword_ids
            .iter()
            .filter(|k| present.contains(k))
            .count();
        hit as f64 / prompt.query_keyword_ids.len() as f64
    };
    let bidword = indicator(present.contains(&prompt.bidword_id));
    let cta = indicator(vocab.cta_ids.iter().any(|c| present.contains(c)));
    let length_dev = (text.len() as f64 - interval.midpoint()) / interval.half_width();
    let blacklist = text.iter().filter(|&&t| vocab.is_blacklisted(t)).count() as f64 / 2.0;
    let distinct = if text.len() < 2 {
        1.0
    } else {
        let bigrams: HashSet<(TokenId, TokenId)> =
            text.windows(2).map(|w| (w[0], w[1])).collect();
        bigrams.len() as f64 / (text.len() - 1) as f64
    };

    [coverage, bidword, cta, length_dev, blacklist, distinct]
        .into_iter()
        .map(|x| x.clamp(-1.0, 1.0))
        .collect()
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Hidden ground-truth conversion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    pub seed: u64,
    pub w_ctr: Vec<f64>,
    pub w_cvr: Vec<f64>,
    pub b_ctr: f64,
    pub b_cvr: f64,
}

/// Click-through and click-through-conversion probabilities of one text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtcvrPair {
    pub ctr: f64,
    pub ctcvr: f64,
}

impl OracleParams {
    /// Draws oracle weights with a fixed sign pattern and seeded magnitudes:
    /// clicks favour query coverage, the bidword and (exaggerated) blacklisted
    /// claims; conversions favour calls to action.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0AC1_E000_0000_0001);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let w_ctr = vec![
            u(1.5, 2.5),
            u(1.0, 2.0),
            u(0.5, 1.0),
            u(-0.3, 0.3),
            u(0.8, 1.4),
            u(0.2, 0.6),
        ];
        let w_cvr = vec![
            u(0.5, 1.0),
            u(0.5, 1.0),
            u(1.5, 2.5),
            u(-0.3, 0.3),
            u(0.6, 1.2),
            u(-0.2, 0.2),
        ];
        Self {
            seed,
            w_ctr,
            w_cvr,
            b_ctr: u(-1.8, -1.2),
            b_cvr: u(-1.3, -0.7),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_ctr.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Ground-truth `(p_ctr, p_ctcvr)`; `p_ctcvr = p_ctr * sigmoid(w_cvr . f + b_cvr)`.
pub fn oracle_ctcvr(oracle: &OracleParams, features: &[f64]) -> Result<CtcvrPair> {
    if features.len() != oracle.w_ctr.len() || oracle.w_cvr.len() != oracle.w_ctr.len() {
        return Err(Error::Dimension {
            expected: oracle.w_ctr.len(),
            got: features.len(),
        });
    }
    let ctr = sigmoid(dot(&oracle.w_ctr, features) + oracle.b_ctr);
    let cvr = sigmoid(dot(&oracle.w_cvr, features) + oracle.b_cvr);
    Ok(CtcvrPair {
        ctr,
        ctcvr: ctr * cvr,
    })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything that maps a feature vector to a CTCVR estimate: the oracle itself
/// or a learned predictor.
pub trait CtcvrScorer {
    fn score(&self, features: &[f64]) -> Result<f64>;
}

impl CtcvrScorer for OracleParams {
    fn score(&self, features: &[f64]) -> Result<f64> {
        Ok(oracle_ctcvr(self, features)?.ctcvr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub features: Vec<f64>,
    pub click: bool,
    pub conversion: bool,
}

/// Entire-space labelled impressions: `conversion` implies `click`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleDataset {
    pub rows: Vec<LabeledRow>,
}

impl OracleDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
        header.extend(["click", "conversion"]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.features.iter().map(|x| x.to_string()).collect();
            rec.push(u8::from(row.click).to_string());
            rec.push(u8::from(row.conversion).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let width = r.headers()?.len();
        if width < 3 {
            return Err(Error::Config(format!(
                "{}: expected feature columns plus click,conversion",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: bad number {s:?}: {e}", path.display())))
            };
            let features = (0..width - 2)
                .map(|i| parse(&rec[i]))
                .collect::<Result<Vec<_>>>()?;
            let click = parse(&rec[width - 2])? != 0.0;
            let conversion = parse(&rec[width - 1])? != 0.0;
            rows.push(LabeledRow {
                features,
                click,
                conversion,
            });
        }
        Ok(Self { rows })
    }
}

/// Draws a random text for `prompt`; per-text class mixture weights are
/// themselves random so the sample covers the feature space broadly.
pub fn random_text<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    prompt: &Prompt,
    max_len: usize,
    rng: &mut R,
) -> Vec<TokenId> {
    let len = rng.random_range(0..=max_len);
    let p_kw = rng.random_range(0.0..0.4);
    let p_cta = rng.random_range(0.0..0.2);
    let p_black = if vocab.blacklist_ids.is_empty() {
        0.0
    } else {
        rng.random_range(0.0..0.15)
    };
    let p_sep = 0.05;
    let mut out = Vec::with_capacity(len + 1);
    for _ in 0..len {
        let u: f64 = rng.random();
        let t = if u < p_kw {
            if rng.random::<f64>() < 0.7 {
                let n = prompt.query_keyword_ids.len();
                let k = rng.random_range(0..=n);
                if k == n {
                    prompt.bidword_id
                } else {
                    prompt.query_keyword_ids[k]
                }
            } else {
                pick(&vocab.keyword_ids, rng)
            }
        } else if u < p_kw + p_cta {
            pick(&vocab.cta_ids, rng)
        } else if u < p_kw + p_cta + p_black {
            pick(&vocab.blacklist_ids, rng)
        } else if u < p_kw + p_cta + p_black + p_sep {
            vocab.special.sep
        } else {
            pick(&vocab.filler_ids, rng)
        };
        out.push(t);
    }
    if len < max_len {
        out.push(vocab.special.eos);
    }
    out
}

fn pick<R: Rng + ?Sized>(ids: &[TokenId], rng: &mut R) -> TokenId {
    ids[rng.random_range(0..ids.len())]
}

/// Labels `n` random texts with Bernoulli click and click-gated conversion
/// draws from the oracle.
pub fn label_dataset<R: Rng + ?Sized>(
    env: &Environment,
    n: usize,
    rng: &mut R,
) -> Result<OracleDataset> {
    if n == 0 {
        return Err(Error::Precondition("label_dataset requires n >= 1".into()));
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let prompt = sample_prompt(&env.vocab, env.max_query_keywords, i as u64, rng);
        let text = random_text(&env.vocab, &prompt, env.max_len, rng);
        let features = featurize(&prompt, &text, &env.vocab, env.interval);
        let p = oracle_ctcvr(&env.oracle, &features)?;
        let click = rng.random::<f64>() < p.ctr;
        let cvr = p.ctcvr / p.ctr;
        let conversion = click && rng.random::<f64>() < cvr;
        rows.push(LabeledRow {
            features,
            click,
            conversion,
        });
    }
    Ok(OracleDataset { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default)]
    pub vocab: VocabConfig,
    #[serde(default)]
    pub length_interval: LengthInterval,
    #[serde(default = "default_max_query")]
    pub max_query_keywords: usize,
    /// Generation length cap, shared by sampling and random-text labelling.
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_query() -> usize {
    4
}

fn default_max_len() -> usize {
    32
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            vocab: VocabConfig::default(),
            length_interval: LengthInterval::default(),
            max_query_keywords: default_max_query(),
            max_len: default_max_len(),
        }
    }
}

/// Immutable environment shared by every configuration trained under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub vocab: Vocabulary,
    pub oracle: OracleParams,
    pub interval: LengthInterval,
    pub max_query_keywords: usize,
    pub max_len: usize,
}

impl Environment {
    pub fn build(config: &EnvConfig, seed: u64) -> Result<Self> {
        config.length_interval.validate()?;
        if config.max_len == 0 {
            return Err(Error::Config("env.max_len must be at least 1".into()));
        }
        if config.max_query_keywords == 0 {
            return Err(Error::Config(
                "env.max_query_keywords must be at least 1".into(),
            ));
        }
        Ok(Self {
            vocab: build_vocabulary(&config.vocab, seed)?,
            oracle: OracleParams::generate(seed),
            interval: config.length_interval,
            max_query_keywords: config.max_query_keywords,
            max_len: config.max_len,
        })
    }

    pub fn featurize(&self, prompt: &Prompt, tokens: &[TokenId]) -> Vec<f64> {
        featurize(prompt, tokens, &self.vocab, self.interval)
    }

    pub fn sample_prompt<R: Rng + ?Sized>(&self, id: u64, rng: &mut R) -> Prompt {
        sample_prompt(&self.vocab, self.max_query_keywords, id, rng)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        build_vocabulary(&VocabConfig::default(), 7).unwrap()
    }

    #[test]
    fn default_sizes_give_disjoint_classes() {
        let v = vocab();
        assert_eq!(v.len(), 198);
        assert_eq!(v.keyword_ids.len(), 20);
        assert_eq!(v.cta_ids.len(), 10);
        assert_eq!(v.blacklist_ids.len(), 5);
        assert_eq!(v.filler_ids.len(), 160);
        let mut all: Vec<TokenId> = [v.special.bos, v.special.eos, v.special.sep]
            .into_iter()
            .chain(v.keyword_ids.iter().copied())
            .chain(v.cta_ids.iter().copied())
            .chain(v.blacklist_ids.iter().copied())
            .chain(v.filler_ids.iter().copied())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..198).collect::<Vec<_>>());
    }

    #[test]
    fn empty_blacklist_with_risk_control_is_rejected() {
        let cfg = VocabConfig {
            blacklist: 0,
            ..VocabConfig::default()
        };
        assert!(matches!(build_vocabulary(&cfg, 1), Err(Error::Config(_))));
        let cfg = VocabConfig {
            blacklist: 0,
            risk_control: false,
            ..VocabConfig::default()
        };
        assert!(build_vocabulary(&cfg, 1).is_ok());
    }

    #[test]
    fn zero_sized_class_is_rejected() {
        let cfg = VocabConfig {
            cta: 0,
            ..VocabConfig::default()
        };
        assert!(build_vocabulary(&cfg, 1).is_err());
    }

    #[test]
    fn overlapping_classes_are_rejected() {
        let v = vocab();
        let mut cta = v.cta_ids.clone();
        cta.push(v.keyword_ids[0]);
        let err = Vocabulary::from_parts(
            0,
            v.tokens.clone(),
            v.special,
            [
                v.keyword_ids.clone(),
                cta,
                v.blacklist_ids.clone(),
                v.filler_ids.clone(),
            ],
            vec![],
            true,
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn vocabulary_is_deterministic_and_round_trips() {
        let a = vocab();
        let b = vocab();
        let ja = serde_json::to_string(&a).unwrap();
        assert_eq!(ja, serde_json::to_string(&b).unwrap());
        let back: Vocabulary = serde_json::from_str(&ja).unwrap();
        assert_eq!(back, a);
        assert_ne!(
            build_vocabulary(&VocabConfig::default(), 8).unwrap().keyword_ids,
            a.keyword_ids
        );
    }

    #[test]
    fn single_keyword_vocab_always_bids_on_it() {
        let cfg = VocabConfig {
            keywords: 1,
            ..VocabConfig::default()
        };
        let v = build_vocabulary(&cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..100 {
            let p = sample_prompt(&v, 4, i, &mut rng);
            assert_eq!(p.bidword_id, v.keyword_ids[0]);
            assert_eq!(p.query_keyword_ids, vec![v.keyword_ids[0]]);
        }
    }

    #[test]
    fn prompts_respect_invariants_and_are_reproducible() {
        let v = vocab();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|i| sample_prompt(&v, 4, i, &mut rng))
                .collect::<Vec<_>>()
        };
        let a = draw(11);
        assert_eq!(a, draw(11));
        for p in &a {
            assert!(v.keyword_ids.contains(&p.bidword_id));
            assert!((1..=4).contains(&p.query_keyword_ids.len()));
            assert!(p.query_keyword_ids.iter().all(|k| v.keyword_ids.contains(k)));
        }
    }

    #[test]
    fn features_of_full_coverage_text() {
        let v = vocab();
        let prompt = Prompt {
            id: 0,
            query_keyword_ids: vec![v.keyword_ids[1], v.keyword_ids[2]],
            bidword_id: v.keyword_ids[3],
        };
        let text = vec![
            v.keyword_ids[1],
            v.keyword_ids[2],
            v.keyword_ids[3],
            v.special.eos,
        ];
        let f = featurize(&prompt, &text, &v, LengthInterval::default());
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 1.0);
        assert_eq!(f[2], 0.0);
    }

    #[test]
    fn features_of_empty_text() {
        let v = vocab();
        let prompt = Prompt {
            id: 0,
            query_keyword_ids: vec![v.keyword_ids[1]],
            bidword_id: v.keyword_ids[3],
        };
        let f = featurize(&prompt, &[v.special.eos], &v, LengthInterval::default());
        assert_eq!(f[0], 0.0);
        assert_eq!(f[3], -1.0);
        assert!(f.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn oracle_at_origin_is_half_and_quarter() {
        let oracle = OracleParams {
            seed: 0,
            w_ctr: vec![0.3; FEATURE_DIM],
            w_cvr: vec![-0.2; FEATURE_DIM],
            b_ctr: 0.0,
            b_cvr: 0.0,
        };
        let p = oracle_ctcvr(&oracle, &[0.0; FEATURE_DIM]).unwrap();
        assert_eq!(p.ctr, 0.5);
        assert_eq!(p.ctcvr, 0.25);
    }

    #[test]
    fn oracle_rejects_wrong_dimension() {
        let oracle = OracleParams::generate(1);
        assert!(matches!(
            oracle_ctcvr(&oracle, &[0.0; 3]),
            Err(Error::Dimension { expected: 6, got: 3 })
        ));
    }

    #[test]
    fn label_dataset_rejects_zero_rows() {
        let env = Environment::build(&EnvConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(label_dataset(&env, 0, &mut rng).is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let env = Environment::build(&EnvConfig::default(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = label_dataset(&env, 50, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.write_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "coverage,bidword,cta,length_dev,blacklist,distinct_bigrams,click,conversion"
        ));
        assert_eq!(OracleDataset::read_csv(&path).unwrap(), ds);
    }
}
