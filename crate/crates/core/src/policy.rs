//! Order-k n-gram softmax language model.
//!
//! The policy is an explicit logit table with one row per BOS-padded context
//! of the last `k` tokens. Generation is conditioned on a prompt by seeding
//! the history with `[BOS, bidword]`. Everything needed by the optimizer is
//! closed-form: per-token log-probabilities, the gradient of a log-probability
//! with respect to its logit row, and the exact categorical KL between two
//! policies at a context.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{read_json, write_json, Prompt, TokenId, Vocabulary};
use crate::error::{Error, Result};

/// Largest logit table (entries) the policy will allocate.
pub const MAX_TABLE_ENTRIES: usize = 1 << 27;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    order: usize,
    vocab_size: usize,
    bos: TokenId,
    num_contexts: usize,
    logits: Vec<f64>,
}

/// Serialized form of a policy plus the training step it was taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub order: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub bos: TokenId,
    pub step: u64,
    pub logits: Vec<f64>,
}

fn table_contexts(order: usize, vocab_size: usize) -> Result<usize> {
    if !(1..=3).contains(&order) {
        return Err(Error::Config(format!(
            "policy order must be 1, 2 or 3 (got {order})"
        )));
    }
    let contexts = (0..order).try_fold(1usize, |acc, _| acc.checked_mul(vocab_size));
    match contexts.and_then(|c| c.checked_mul(vocab_size).map(|e| (c, e))) {
        Some((c, entries)) if entries <= MAX_TABLE_ENTRIES => Ok(c),
        _ => Err(Error::Config(format!(
            "logit table for order {order} over {vocab_size} tokens exceeds {MAX_TABLE_ENTRIES} entries"
        ))),
    }
}

/// Builds a policy whose logits are i.i.d. uniform in `[-init_scale, init_scale]`.
pub fn init_policy<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    order: usize,
    init_scale: f64,
    rng: &mut R,
) -> Result<PolicyParams> {
    PolicyParams::random(vocab.len(), vocab.special.bos, order, init_scale, rng)
}

impl PolicyParams {
    pub fn zeros(vocab_size: usize, bos: TokenId, order: usize) -> Result<Self> {
        let num_contexts = table_contexts(order, vocab_size)?;
        Ok(Self {
            order,
            vocab_size,
            bos,
            num_contexts,
            logits: vec![0.0; num_contexts * vocab_size],
        })
    }

    pub fn random<R: Rng + ?Sized>(
        vocab_size: usize,
        bos: TokenId,
        order: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(init_scale >= 0.0 && init_scale.is_finite()) {
            return Err(Error::Config(format!(
                "init_scale must be finite and >= 0 (got {init_scale})"
            )));
        }
        let mut p = Self::zeros(vocab_size, bos, order)?;
        if init_scale > 0.0 {
            for x in &mut p.logits {
                *x = rng.random_range(-init_scale..=init_scale);
            }
        }
        Ok(p)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn row(&self, context_id: usize) -> &[f64] {
        let v = self.vocab_size;
        &self.logits[context_id * v..(context_id + 1) * v]
    }

    pub fn row_mut(&mut self, context_id: usize) -> &mut [f64] {
        let v = self.vocab_size;
        &mut self.logits[context_id * v..(context_id + 1) * v]
    }

    /// Context id of the last `k` tokens of `history`, left-padded with BOS.
    pub fn context_id(&self, history: &[TokenId]) -> usize {
        let k = self.order;
        let pad = k.saturating_sub(history.len());
        let tail = &history[history.len().saturating_sub(k)..];
        std::iter::repeat_n(self.bos, pad)
            .chain(tail.iter().copied())
            .fold(0, |id, t| id * self.vocab_size + t)
    }

    fn advance(&self, context_id: usize, token: TokenId) -> usize {
        (context_id * self.vocab_size + token) % self.num_contexts
    }

    /// Context ids seen while generating `tokens` after `prompt`, one per
    /// position.
    pub fn context_ids(&self, prompt: &Prompt, tokens: &[TokenId]) -> Vec<usize> {
        let mut id = self.context_id(&prompt_history(prompt, self.bos));
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            out.push(id);
            id = self.advance(id, t);
        }
        out
    }

    /// Next-token distribution after `context` (BOS-padded to `k`).
    pub fn next_token_dist(&self, context: &[TokenId]) -> Vec<f64> {
        log_softmax(self.row(self.context_id(context)))
            .into_iter()
            .map(f64::exp)
            .collect()
    }

    pub fn row_log_probs(&self, context_id: usize) -> Vec<f64> {
        log_softmax(self.row(context_id))
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab_size) {
            Some(&t) => Err(Error::TokenOutOfRange {
                token: t,
                vocab_size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    pub fn to_checkpoint(&self, step: u64) -> Checkpoint {
        Checkpoint {
            order: self.order,
            vocab_size: self.vocab_size,
            bos: self.bos,
            step,
            logits: self.logits.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let num_contexts = table_contexts(ckpt.order, ckpt.vocab_size)?;
        if ckpt.logits.len() != num_contexts * ckpt.vocab_size {
            return Err(Error::Dimension {
                expected: num_contexts * ckpt.vocab_size,
                got: ckpt.logits.len(),
            });
        }
        if ckpt.logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("checkpoint contains non-finite logits".into()));
        }
        Ok(Self {
            order: ckpt.order,
            vocab_size: ckpt.vocab_size,
            bos: ckpt.bos,
            num_contexts,
            logits: ckpt.logits,
        })
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<()> {
        write_json(path, &self.to_checkpoint(step))
    }

    /// Loads a checkpoint; returns the policy and its step.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let ckpt: Checkpoint = read_json(path)?;
        let step = ckpt.step;
        Ok((Self::from_checkpoint(ckpt)?, step))
    }
}

/// Initial generation history for a prompt.
pub fn prompt_history(prompt: &Prompt, bos: TokenId) -> Vec<TokenId> {
    vec![bos, prompt.bidword_id]
}

/// Max-subtracted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let log_z = max + sum.ln();
    logits.iter().map(|&z| z - log_z).collect()
}

/// One sampled continuation with the log-probabilities recorded at sampling
/// time under the rollout policy and under the reference policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub prompt_id: u64,
    pub tokens: Vec<TokenId>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// `G` rollouts for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub prompt: Prompt,
    pub rollouts: Vec<Rollout>,
}

/// Per-context rows computed once per batch: log-probabilities and the
/// cumulative distribution of the rollout policy, and reference
/// log-probabilities.
#[derive(Debug)]
pub struct RowCache<'a> {
    params: &'a PolicyParams,
    reference: &'a PolicyParams,
    rows: HashMap<usize, CachedRow>,
}

#[derive(Debug)]
struct CachedRow {
    log_probs: Vec<f64>,
    cdf: Vec<f64>,
    ref_log_probs: Vec<f64>,
}

impl<'a> RowCache<'a> {
    pub fn new(params: &'a PolicyParams, reference: &'a PolicyParams) -> Result<Self> {
        if reference.order != params.order || reference.vocab_size != params.vocab_size {
            return Err(Error::Config("reference policy shape differs from policy".into()));
        }
        Ok(Self {
            params,
            reference,
            rows: HashMap::new(),
        })
    }

    fn row(&mut self, context_id: usize) -> &CachedRow {
        let (params, reference) = (self.params, self.reference);
        self.rows.entry(context_id).or_insert_with(|| {
            let log_probs = params.row_log_probs(context_id);
            let mut acc = 0.0;
            let cdf = log_probs
                .iter()
                .map(|lp| {
                    acc += lp.exp();
                    acc
                })
                .collect();
            let ref_log_probs = if std::ptr::eq(params, reference) {
                log_probs.clone()
            } else {
                reference.row_log_probs(context_id)
            };
            CachedRow {
                log_probs,
                cdf,
                ref_log_probs,
            }
        })
    }
}

fn sample_index<R: Rng + ?Sized>(row: &CachedRow, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let i = row.cdf.partition_point(|&c| c <= u);
    if i < row.cdf.len() {
        return i;
    }
    // u landed in the rounding slack above the cumulative sum
    row.log_probs
        .iter()
        .rposition(|lp| lp.exp() > 0.0)
        .unwrap_or(row.log_probs.len() - 1)
}

/// Samples `group_size` rollouts autoregressively from `params`, stopping at
/// `eos` or after `max_len` tokens.
pub fn sample_rollouts<R: Rng + ?Sized>(
    params: &PolicyParams,
    reference: &PolicyParams,
    prompt: &Prompt,
    group_size: usize,
    max_len: usize,
    eos: TokenId,
    rng: &mut R,
) -> Result<Group> {
    let mut cache = RowCache::new(params, reference)?;
    sample_rollouts_cached(&mut cache, prompt, group_size, max_len, eos, rng)
}

/// [`sample_rollouts`] reusing rows cached across calls.
pub fn sample_rollouts_cached<R: Rng + ?Sized>(
    cache: &mut RowCache<'_>,
    prompt: &Prompt,
    group_size: usize,
    max_len: usize,
    eos: TokenId,
    rng: &mut R,
) -> Result<Group> {
    if group_size < 2 {
        return Err(Error::Precondition(format!(
            "group size must be at least 2 (got {group_size})"
        )));
    }
    if max_len == 0 {
        return Err(Error::Precondition("max_len must be at least 1".into()));
    }
    let params = cache.params;
    let start = params.context_id(&prompt_history(prompt, params.bos));
    let mut rollouts = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let mut ctx = start;
        let mut tokens = Vec::new();
        let mut logp_old = Vec::new();
        let mut logp_ref = Vec::new();
        while tokens.len() < max_len {
            let row = cache.row(ctx);
            let t = sample_index(row, rng);
            tokens.push(t);
            logp_old.push(row.log_probs[t]);
            logp_ref.push(row.ref_log_probs[t]);
            if t == eos {
                break;
            }
            ctx = params.advance(ctx, t);
        }
        rollouts.push(Rollout {
            prompt_id: prompt.id,
            tokens,
            logp_old,
            logp_ref,
        });
    }
    Ok(Group {
        prompt: prompt.clone(),
        rollouts,
    })
}

/// Per-token log-probabilities of `tokens` generated after `prompt`.
pub fn log_prob(params: &PolicyParams, prompt: &Prompt, tokens: &[TokenId]) -> Result<Vec<f64>> {
    if tokens.is_empty() {
        return Err(Error::Precondition("log_prob needs a nonempty sequence".into()));
    }
    params.check_tokens(tokens)?;
    Ok(params
        .context_ids(prompt, tokens)
        .into_iter()
        .zip(tokens)
        .map(|(ctx, &t)| params.row_log_probs(ctx)[t])
        .collect())
}

/// Gradient of one log-probability restricted to its (only nonzero) row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGrad {
    pub context_id: usize,
    pub values: Vec<f64>,
}

/// `d log softmax(z)_token / d z_m = 1{m = token} - p_m` on the context row.
pub fn grad_log_prob(params: &PolicyParams, context: &[TokenId], token: TokenId) -> Result<RowGrad> {
    params.check_tokens(&[token])?;
    params.check_tokens(context)?;
    let context_id = params.context_id(context);
    Ok(RowGrad {
        context_id,
        values: grad_log_prob_row(&params.row_log_probs(context_id), token),
    })
}

pub(crate) fn grad_log_prob_row(log_probs: &[f64], token: TokenId) -> Vec<f64> {
    log_probs
        .iter()
        .enumerate()
        .map(|(m, lp)| f64::from(u8::from(m == token)) - lp.exp())
        .collect()
}

/// Exact `KL(p || q)` from two log-probability rows, clamped at zero against
/// rounding.
pub fn kl_from_log_probs(lp: &[f64], lq: &[f64]) -> f64 {
    lp.iter()
        .zip(lq)
        .map(|(&a, &b)| if a == b { 0.0 } else { a.exp() * (a - b) })
        .sum::<f64>()
        .max(0.0)
}

/// Exact next-token `KL(params_a || params_b)` at `context`.
pub fn kl_next_token(a: &PolicyParams, b: &PolicyParams, context: &[TokenId]) -> Result<f64> {
    if a.vocab_size != b.vocab_size {
        return Err(Error::Dimension {
            expected: a.vocab_size,
            got: b.vocab_size,
        });
    }
    let la = a.row_log_probs(a.context_id(context));
    let lb = b.row_log_probs(b.context_id(context));
    Ok(kl_from_log_probs(&la, &lb))
}

/// Row-sparse gradient over a logit table; rows are kept sorted so updates
/// apply in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseGrad {
    pub fn add_scaled(&mut self, context_id: usize, scale: f64, values: &[f64]) {
        let row = self
            .rows
            .entry(context_id)
            .or_insert_with(|| vec![0.0; values.len()]);
        for (r, v) in row.iter_mut().zip(values) {
            *r += scale * v;
        }
    }

    pub fn get(&self, context_id: usize, token: TokenId) -> f64 {
        self.rows.get(&context_id).map_or(0.0, |r| r[token])
    }

    pub fn scale(&mut self, factor: f64) {
        for row in self.rows.values_mut() {
            row.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .values()
            .flatten()
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_vocabulary, VocabConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prompt(bid: TokenId) -> Prompt {
        Prompt {
            id: 0,
            query_keyword_ids: vec![bid],
            bidword_id: bid,
        }
    }

    #[test]
    fn zero_init_is_uniform() {
        let vocab = build_vocabulary(&VocabConfig::default(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = init_policy(&vocab, 2, 0.0, &mut rng).unwrap();
        let v = vocab.len() as f64;
        for q in p.next_token_dist(&[3, 4]) {
            assert!((q - 1.0 / v).abs() < 1e-15);
        }
        let lp = log_prob(&p, &prompt(vocab.keyword_ids[0]), &[5, 6, 7]).unwrap();
        for x in lp {
            assert!((x + v.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn table_shape_for_order_two() {
        let p = PolicyParams::zeros(201, 0, 2).unwrap();
        assert_eq!(p.num_contexts(), 201 * 201);
        assert_eq!(p.logits().len(), 201 * 201 * 201);
    }

    #[test]
    fn order_outside_range_is_rejected() {
        assert!(PolicyParams::zeros(10, 0, 0).is_err());
        assert!(PolicyParams::zeros(10, 0, 4).is_err());
        assert!(PolicyParams::zeros(201, 0, 3).is_err());
        assert!(PolicyParams::zeros(20, 0, 3).is_ok());
    }

    #[test]
    fn same_seed_same_params() {
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            PolicyParams::random(12, 0, 2, 1.0, &mut rng).unwrap()
        };
        assert_eq!(mk(), mk());
    }

    #[test]
    fn padded_contexts_are_distinct() {
        let p = PolicyParams::zeros(7, 0, 3).unwrap();
        let ids = [
            p.context_id(&[]),
            p.context_id(&[4]),
            p.context_id(&[4, 5]),
            p.context_id(&[4, 5, 6]),
            p.context_id(&[1, 4, 5, 6]),
        ];
        assert_eq!(ids[0], 0);
        assert_ne!(ids[1], ids[2]);
        assert_eq!(ids[3], ids[4]);
        assert_eq!(ids[1], 4);
    }

    #[test]
    fn dominant_logit_takes_the_mass() {
        let mut p = PolicyParams::zeros(200, 0, 1).unwrap();
        let ctx = p.context_id(&[3]);
        p.row_mut(ctx)[17] = 20.0;
        let dist = p.next_token_dist(&[3]);
        assert!(dist[17] > 0.999);
    }

    #[test]
    fn uniform_gradient_closed_form() {
        let p = PolicyParams::zeros(4, 0, 1).unwrap();
        let g = grad_log_prob(&p, &[1], 2).unwrap();
        assert_eq!(g.values, vec![-0.25, -0.25, 0.75, -0.25]);
    }

    #[test]
    fn deterministic_policy_gives_identical_rollouts() {
        let mut p = PolicyParams::zeros(6, 0, 1).unwrap();
        for ctx in 0..6 {
            let next = (ctx + 1) % 6;
            let next = if next == 0 { 1 } else { next };
            p.row_mut(ctx)[next] = 80.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = sample_rollouts(&p, &p, &prompt(3), 5, 10, 1, &mut rng).unwrap();
        for r in &g.rollouts {
            assert_eq!(r.tokens, g.rollouts[0].tokens);
        }
        assert_eq!(g.rollouts[0].tokens, vec![4, 5, 1]);
    }

    #[test]
    fn sampling_rejects_small_groups() {
        let p = PolicyParams::zeros(6, 0, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_rollouts(&p, &p, &prompt(3), 1, 10, 1, &mut rng).is_err());
    }

    #[test]
    fn log_prob_rejects_bad_tokens() {
        let p = PolicyParams::zeros(6, 0, 1).unwrap();
        assert!(matches!(
            log_prob(&p, &prompt(3), &[2, 9]),
            Err(Error::TokenOutOfRange { token: 9, .. })
        ));
        assert!(log_prob(&p, &prompt(3), &[]).is_err());
    }

    #[test]
    fn identical_policies_have_zero_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = PolicyParams::random(9, 0, 2, 2.0, &mut rng).unwrap();
        assert_eq!(kl_next_token(&p, &p, &[3, 4]).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyParams::random(8, 0, 2, 1.7, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt_3.json");
        p.save(&path, 3).unwrap();
        let (back, step) = PolicyParams::load(&path).unwrap();
        assert_eq!(step, 3);
        assert_eq!(back, p);
        assert!(back
            .logits()
            .iter()
            .zip(p.logits())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
