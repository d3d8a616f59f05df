//! Clipped group-relative policy optimization with an exact KL anchor.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{OptimizerKind, TrainConfig};
use crate::credit::{combine_advantages, sentence_advantage, token_advantage, AdvantageTensor};
use crate::env::{content, CtcvrScorer, Environment, TokenId};
use crate::error::{Error, Result};
use crate::metrics::{compliance_rate, delta_ctcvr, diversity_metric, mean};
use crate::policy::{
    init_policy, kl_from_log_probs, sample_rollouts_cached, Group, PolicyParams,
    RowCache, SparseGrad,
};
use crate::rewards::{aggregate_reward, DiversityTracker, RewardBreakdown, RewardContext};

// Independent RNG streams derived from one run seed.
const STREAM_INIT: u64 = 1;
const STREAM_PROMPTS: u64 = 2;
const STREAM_SAMPLING: u64 = 3;
const STREAM_EVAL: u64 = 4;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Value and row-sparse gradient of the clipped, KL-regularized objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveOutput {
    /// `surrogate - beta * kl`; maximized.
    pub value: f64,
    pub surrogate: f64,
    /// Mean exact next-token `KL(pi_theta || pi_ref)` over visited contexts,
    /// weighted like the surrogate.
    pub kl: f64,
    /// Fraction of tokens whose clipped branch is active.
    pub clip_frac: f64,
    pub grad: SparseGrad,
}

/// Objective of one group:
/// `(1/G) sum_i w_i sum_t [min(rho A, clip(rho) A) - beta KL_t]` with
/// `w_i = 1/n_i` under `length_norm` (else 1) and
/// `rho = exp(log pi_theta - logp_old)`. The stored `logp_old` of each rollout
/// stands in for the snapshot policy.
pub fn grpo_objective(
    group: &Group,
    advantages: &AdvantageTensor,
    params: &PolicyParams,
    reference: &PolicyParams,
    clip_eps: f64,
    beta: f64,
    length_norm: bool,
) -> Result<ObjectiveOutput> {
    batch_objective(
        std::slice::from_ref(group),
        std::slice::from_ref(advantages),
        params,
        reference,
        clip_eps,
        beta,
        length_norm,
    )
}

/// Mean of [`grpo_objective`] over groups.
pub fn batch_objective(
    groups: &[Group],
    advantages: &[AdvantageTensor],
    params: &PolicyParams,
    reference: &PolicyParams,
    clip_eps: f64,
    beta: f64,
    length_norm: bool,
) -> Result<ObjectiveOutput> {
    if !(clip_eps > 0.0 && clip_eps < 1.0) {
        return Err(Error::Precondition(format!("clip epsilon must lie in (0, 1), got {clip_eps}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Precondition(format!("KL weight must be >= 0, got {beta}")));
    }
    if reference.vocab_size() != params.vocab_size() || reference.order() != params.order() {
        return Err(Error::Config("reference policy shape differs from policy".into()));
    }
    if groups.is_empty() || groups.len() != advantages.len() {
        return Err(Error::LengthMismatch {
            what: "groups and advantage tensors",
            left: groups.len(),
            right: advantages.len(),
        });
    }
    let mut acc = Accumulator {
        params,
        reference,
        clip_eps,
        length_norm,
        stats: HashMap::new(),
        rows: BTreeMap::new(),
        surrogate: 0.0,
        kl: 0.0,
        tokens: 0,
        clipped: 0,
    };
    let scale = 1.0 / groups.len() as f64;
    for (group, adv) in groups.iter().zip(advantages) {
        acc.add_group(group, adv, scale)?;
    }
    Ok(acc.finish(beta))
}

struct RowStats {
    lp: Vec<f64>,
    lq: Vec<f64>,
    kl: f64,
}

/// Per-context sums: the policy-gradient part of a row is
/// `sum_t c_t (e_{y_t} - p) = sum_t c_t e_{y_t} - (sum_t c_t) p`.
#[derive(Default)]
struct RowAcc {
    coef: f64,
    hits: Vec<(TokenId, f64)>,
    kl_weight: f64,
}

struct Accumulator<'a> {
    params: &'a PolicyParams,
    reference: &'a PolicyParams,
    clip_eps: f64,
    length_norm: bool,
    stats: HashMap<usize, RowStats>,
    rows: BTreeMap<usize, RowAcc>,
    surrogate: f64,
    kl: f64,
    tokens: usize,
    clipped: usize,
}

impl Accumulator<'_> {
    fn add_group(&mut self, group: &Group, advantages: &AdvantageTensor, scale: f64) -> Result<()> {
        let g = group.rollouts.len();
        if advantages.per_rollout.len() != g {
            return Err(Error::LengthMismatch {
                what: "rollouts and advantage rows",
                left: g,
                right: advantages.per_rollout.len(),
            });
        }
        let (params, reference) = (self.params, self.reference);
        for (i, (rollout, adv)) in group.rollouts.iter().zip(&advantages.per_rollout).enumerate() {
            let n = rollout.tokens.len();
            if adv.len() != n || rollout.logp_old.len() != n {
                return Err(Error::LengthMismatch {
                    what: "rollout tokens and advantages/log-probs",
                    left: n,
                    right: adv.len().min(rollout.logp_old.len()),
                });
            }
            if n == 0 {
                continue;
            }
            if let Some(&tok) = rollout.tokens.iter().find(|&&t| t >= params.vocab_size()) {
                return Err(Error::TokenOutOfRange {
                    token: tok,
                    vocab_size: params.vocab_size(),
                });
            }
            let w = scale * if self.length_norm { 1.0 / n as f64 } else { 1.0 } / g as f64;
            let contexts = params.context_ids(&group.prompt, &rollout.tokens);
            for (t, ((&ctx, &tok), (&a, &lp_old))) in contexts
                .iter()
                .zip(&rollout.tokens)
                .zip(adv.iter().zip(&rollout.logp_old))
                .enumerate()
            {
                let row = self.stats.entry(ctx).or_insert_with(|| {
                    let lp = params.row_log_probs(ctx);
                    let lq = reference.row_log_probs(ctx);
                    let kl = kl_from_log_probs(&lp, &lq);
                    RowStats { lp, lq, kl }
                });
                let rho = (row.lp[tok] - lp_old).exp();
                if !(rho.is_finite() && a.is_finite() && row.kl.is_finite()) {
                    return Err(Error::NonFinite {
                        what: "objective term",
                        rollout: i,
                        position: t,
                    });
                }
                let eps = self.clip_eps;
                let dead = (a > 0.0 && rho > 1.0 + eps) || (a < 0.0 && rho < 1.0 - eps);
                let term = if dead {
                    self.clipped += 1;
                    rho.clamp(1.0 - eps, 1.0 + eps) * a
                } else {
                    rho * a
                };
                self.surrogate += w * term;
                self.kl += w * row.kl;
                self.tokens += 1;
                let acc = self.rows.entry(ctx).or_default();
                acc.kl_weight += w;
                if !dead && a != 0.0 {
                    let c = w * a * rho;
                    acc.coef += c;
                    acc.hits.push((tok, c));
                }
            }
        }
        Ok(())
    }

    fn finish(self, beta: f64) -> ObjectiveOutput {
        let mut grad = SparseGrad::default();
        for (ctx, acc) in self.rows {
            let row = &self.stats[&ctx];
            let kl_scale = if beta > 0.0 && row.kl > 0.0 { beta * acc.kl_weight } else { 0.0 };
            if acc.hits.is_empty() && kl_scale == 0.0 {
                continue;
            }
            let mut values: Vec<f64> = row
                .lp
                .iter()
                .zip(&row.lq)
                .map(|(&lp, &lq)| {
                    let p = lp.exp();
                    -acc.coef * p - kl_scale * p * (lp - lq - row.kl)
                })
                .collect();
            for (tok, c) in acc.hits {
                values[tok] += c;
            }
            grad.rows.insert(ctx, values);
        }
        ObjectiveOutput {
            value: self.surrogate - beta * self.kl,
            surrogate: self.surrogate,
            kl: self.kl,
            clip_frac: if self.tokens == 0 {
                0.0
            } else {
                self.clipped as f64 / self.tokens as f64
            },
            grad,
        }
    }
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Gradient-ascent optimizer over the logit table.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    /// Adam with moments and bias-correction counters kept per context row;
    /// rows absent from a gradient are left untouched (lazy update).
    Adam {
        lr: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        row_steps: Vec<u32>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: &PolicyParams) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                m: vec![0.0; params.logits().len()],
                v: vec![0.0; params.logits().len()],
                row_steps: vec![0; params.num_contexts()],
            },
        }
    }

    /// One ascent step along `grad`.
    pub fn step(&mut self, params: &mut PolicyParams, grad: &SparseGrad) {
        let vsize = params.vocab_size();
        match self {
            Optimizer::Sgd { lr } => {
                for (&ctx, g) in &grad.rows {
                    for (x, d) in params.row_mut(ctx).iter_mut().zip(g) {
                        *x += *lr * d;
                    }
                }
            }
            Optimizer::Adam {
                lr,
                m,
                v,
                row_steps,
            } => {
                for (&ctx, g) in &grad.rows {
                    row_steps[ctx] += 1;
                    let t = row_steps[ctx] as i32;
                    let c1 = 1.0 - ADAM_B1.powi(t);
                    let c2 = 1.0 - ADAM_B2.powi(t);
                    let range = ctx * vsize..(ctx + 1) * vsize;
                    let row = params.row_mut(ctx);
                    for (((x, d), mi), vi) in row
                        .iter_mut()
                        .zip(g)
                        .zip(&mut m[range.clone()])
                        .zip(&mut v[range])
                    {
                        *mi = ADAM_B1 * *mi + (1.0 - ADAM_B1) * d;
                        *vi = ADAM_B2 * *vi + (1.0 - ADAM_B2) * d * d;
                        *x += *lr * (*mi / c1) / ((*vi / c2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// One row of `curves.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub structural: f64,
    pub ctcvr: f64,
    pub diversity: f64,
    pub semantic: f64,
    pub total: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub compliance: f64,
}

impl StepLog {
    fn check_finite(&self) -> Result<()> {
        let values = [
            self.structural,
            self.ctcvr,
            self.diversity,
            self.semantic,
            self.total,
            self.kl,
            self.clip_frac,
            self.compliance,
        ];
        match values.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::NonFinite {
                what: "step log",
                rollout: self.step,
                position: k,
            }),
            None => Ok(()),
        }
    }
}

/// A sampled and scored batch.
#[derive(Debug, Clone)]
pub struct ScoredBatch {
    pub groups: Vec<Group>,
    /// `breakdowns[g][i]` scores rollout `i` of group `g`.
    pub breakdowns: Vec<Vec<RewardBreakdown>>,
    pub advantages: Vec<AdvantageTensor>,
}

impl ScoredBatch {
    fn summary(&self, step: usize, kl: f64, clip_frac: f64) -> StepLog {
        let all: Vec<&RewardBreakdown> = self.breakdowns.iter().flatten().collect();
        let avg = |f: &dyn Fn(&RewardBreakdown) -> f64| mean(&all.iter().map(|b| f(b)).collect::<Vec<_>>());
        let compliant: Vec<bool> = all.iter().map(|b| b.components.compliant()).collect();
        StepLog {
            step,
            structural: avg(&|b| b.components.structural()),
            ctcvr: avg(&|b| b.components.ctcvr),
            diversity: avg(&|b| b.components.diversity_scalar),
            semantic: avg(&|b| b.components.semantic()),
            total: avg(&|b| b.total()),
            kl,
            clip_frac,
            compliance: compliance_rate(&compliant),
        }
    }
}

/// Mutable state of one training run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: usize,
    pub params: PolicyParams,
    /// Frozen step-0 policy; anchors the KL term and serves as the lift
    /// baseline.
    pub reference: PolicyParams,
    pub tracker: DiversityTracker,
    optimizer: Optimizer,
    prompt_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    next_prompt_id: u64,
    last_advantages: Vec<AdvantageTensor>,
}

/// The step-0 policy of a run: the reference and lift baseline.
pub fn initial_policy(config: &TrainConfig, env: &Environment) -> Result<PolicyParams> {
    let mut init_rng = stream_rng(config.seed, STREAM_INIT);
    init_policy(&env.vocab, config.order, config.init_scale, &mut init_rng)
}

impl TrainState {
    pub fn new(config: &TrainConfig, env: &Environment) -> Result<Self> {
        config.validate()?;
        let params = initial_policy(config, env)?;
        Ok(Self {
            step: 0,
            reference: params.clone(),
            optimizer: Optimizer::new(config.optimizer, config.learning_rate, &params),
            params,
            tracker: DiversityTracker::new(config.diversity),
            prompt_rng: stream_rng(config.seed, STREAM_PROMPTS),
            sample_rng: stream_rng(config.seed, STREAM_SAMPLING),
            next_prompt_id: 0,
            last_advantages: Vec::new(),
        })
    }

    /// Advantages of the most recent batch.
    pub fn last_advantages(&self) -> &[AdvantageTensor] {
        &self.last_advantages
    }

    /// Samples `batch_prompts` groups from the current policy and scores them.
    pub fn sample_batch(
        &mut self,
        env: &Environment,
        scorer: &dyn CtcvrScorer,
        config: &TrainConfig,
    ) -> Result<ScoredBatch> {
        let eos = env.vocab.special.eos;
        let mut groups = Vec::with_capacity(config.batch_prompts);
        let mut cache = RowCache::new(&self.params, &self.reference)?;
        for _ in 0..config.batch_prompts {
            let prompt = env.sample_prompt(self.next_prompt_id, &mut self.prompt_rng);
            self.next_prompt_id += 1;
            groups.push(sample_rollouts_cached(
                &mut cache,
                &prompt,
                config.group_size,
                env.max_len,
                eos,
                &mut self.sample_rng,
            )?);
        }
        score_batch(groups, env, scorer, &mut self.tracker, config)
    }
}

/// Refreshes the n-gram statistics on `groups`, scores every rollout and
/// builds the combined advantages.
pub fn score_batch(
    groups: Vec<Group>,
    env: &Environment,
    scorer: &dyn CtcvrScorer,
    tracker: &mut DiversityTracker,
    config: &TrainConfig,
) -> Result<ScoredBatch> {
    tracker.begin_batch();
    tracker.update_ngram_stats(
        groups
            .iter()
            .flat_map(|g| g.rollouts.iter().map(|r| content(&r.tokens, env.vocab.special.eos))),
    );
    let weights = config.weights.masked(&config.ablation);
    let ctx = RewardContext {
        env,
        scorer,
        tracker,
    };
    let mut breakdowns = Vec::with_capacity(groups.len());
    let mut advantages = Vec::with_capacity(groups.len());
    for (gid, group) in groups.iter().enumerate() {
        let scored: Vec<RewardBreakdown> = group
            .rollouts
            .iter()
            .map(|r| {
                let c = ctx.components(&group.prompt, &r.tokens)?;
                aggregate_reward(c, &config.ablation, &weights, &config.credit)
            })
            .collect::<Result<_>>()?;
        let totals: Vec<f64> = scored.iter().map(|b| b.total_sentence).collect();
        let sentence = sentence_advantage(&totals)?;
        let token: Vec<Vec<f64>> = scored
            .iter()
            .map(|b| token_advantage(&b.token_rewards, config.credit.alpha))
            .collect();
        advantages.push(combine_advantages(gid as u64, &sentence, &token)?);
        breakdowns.push(scored);
    }
    Ok(ScoredBatch {
        groups,
        breakdowns,
        advantages,
    })
}

/// Samples a batch, runs `inner_epochs` ascent steps on it and logs the batch
/// statistics under the pre-update step index.
pub fn train_step(
    state: &mut TrainState,
    env: &Environment,
    scorer: &dyn CtcvrScorer,
    config: &TrainConfig,
) -> Result<StepLog> {
    let batch = state.sample_batch(env, scorer, config)?;
    let mut kl = 0.0;
    let mut clip_frac = 0.0;
    for epoch in 0..config.inner_epochs {
        let obj = batch_objective(
            &batch.groups,
            &batch.advantages,
            &state.params,
            &state.reference,
            config.clip_eps,
            config.kl_beta,
            config.length_norm,
        )?;
        if epoch == 0 {
            kl = obj.kl;
        }
        clip_frac += obj.clip_frac / config.inner_epochs as f64;
        state.optimizer.step(&mut state.params, &obj.grad);
    }
    let log = batch.summary(state.step, kl, clip_frac);
    log.check_finite()?;
    state.last_advantages = batch.advantages;
    state.step += 1;
    Ok(log)
}

/// Samples and logs a batch without updating the policy.
pub fn observe_step(
    state: &mut TrainState,
    env: &Environment,
    scorer: &dyn CtcvrScorer,
    config: &TrainConfig,
) -> Result<StepLog> {
    let batch = state.sample_batch(env, scorer, config)?;
    let mut kl = 0.0;
    for (group, _) in batch.groups.iter().zip(&batch.advantages) {
        kl += group_kl(group, &state.params, &state.reference, config.length_norm);
    }
    kl /= batch.groups.len() as f64;
    let log = batch.summary(state.step, kl, 0.0);
    log.check_finite()?;
    state.last_advantages = batch.advantages;
    Ok(log)
}

fn group_kl(group: &Group, params: &PolicyParams, reference: &PolicyParams, length_norm: bool) -> f64 {
    let g = group.rollouts.len() as f64;
    let mut kl = 0.0;
    for r in &group.rollouts {
        if r.tokens.is_empty() {
            continue;
        }
        let w = if length_norm { 1.0 / r.tokens.len() as f64 } else { 1.0 } / g;
        for ctx in params.context_ids(&group.prompt, &r.tokens) {
            kl += w * kl_from_log_probs(&params.row_log_probs(ctx), &reference.row_log_probs(ctx));
        }
    }
    kl
}

/// Held-out evaluation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub n_prompts: usize,
    pub group_size: usize,
    /// Prompts and samples are drawn from this seed for every evaluated
    /// policy, so a policy evaluated against itself sees identical texts.
    pub seed: u64,
}

impl EvalSettings {
    pub fn from_config(config: &TrainConfig) -> Self {
        Self {
            n_prompts: config.eval_prompts,
            group_size: config.group_size,
            seed: config.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_ctcvr: f64,
    /// Relative lift over the baseline, when one was supplied.
    pub delta_ctcvr: Option<f64>,
    pub compliance: f64,
    pub diversity: f64,
    pub structural: f64,
    pub semantic: f64,
}

impl Metrics {
    pub fn require_delta(&self) -> Result<f64> {
        self.delta_ctcvr
            .ok_or_else(|| Error::Precondition("no baseline policy for CTCVR lift".into()))
    }
}

/// Scores `params` on fresh prompts. CTCVR comes from `scorer` (normally the
/// oracle); diversity uses a tracker built over the evaluation batch alone.
pub fn evaluate(
    params: &PolicyParams,
    env: &Environment,
    scorer: &dyn CtcvrScorer,
    diversity: &crate::config::DiversityConfig,
    settings: &EvalSettings,
    baseline: Option<&PolicyParams>,
) -> Result<Metrics> {
    let (metrics, _) = evaluate_texts(params, env, scorer, diversity, settings)?;
    let delta_ctcvr = match baseline {
        Some(base) => {
            let (b, _) = evaluate_texts(base, env, scorer, diversity, settings)?;
            Some(delta_ctcvr(metrics.mean_ctcvr, b.mean_ctcvr)?)
        }
        None => None,
    };
    Ok(Metrics {
        delta_ctcvr,
        ..metrics
    })
}

fn evaluate_texts(
    params: &PolicyParams,
    env: &Environment,
    scorer: &dyn CtcvrScorer,
    diversity: &crate::config::DiversityConfig,
    settings: &EvalSettings,
) -> Result<(Metrics, Vec<Group>)> {
    if settings.n_prompts == 0 {
        return Err(Error::Precondition("evaluation needs at least one prompt".into()));
    }
    let mut prompt_rng = stream_rng(settings.seed, STREAM_EVAL);
    let mut sample_rng = stream_rng(settings.seed, STREAM_EVAL + 1);
    let eos = env.vocab.special.eos;
    let mut groups = Vec::with_capacity(settings.n_prompts);
    let mut cache = RowCache::new(params, params)?;
    for id in 0..settings.n_prompts {
        let prompt = env.sample_prompt(id as u64, &mut prompt_rng);
        groups.push(sample_rollouts_cached(
            &mut cache,
            &prompt,
            settings.group_size,
            env.max_len,
            eos,
            &mut sample_rng,
        )?);
    }
    let mut tracker = DiversityTracker::new(*diversity);
    tracker.update_ngram_stats(
        groups
            .iter()
            .flat_map(|g| g.rollouts.iter().map(|r| content(&r.tokens, env.vocab.special.eos))),
    );
    let ctx = RewardContext {
        env,
        scorer,
        tracker: &tracker,
    };
    let mut ctcvr = Vec::new();
    let mut compliant = Vec::new();
    let mut div = Vec::new();
    let mut structural = Vec::new();
    let mut semantic = Vec::new();
    for g in &groups {
        for r in &g.rollouts {
            let c = ctx.components(&g.prompt, &r.tokens)?;
            ctcvr.push(c.ctcvr);
            compliant.push(c.compliant());
            div.push(c.diversity_scalar);
            structural.push(c.structural());
            semantic.push(c.semantic());
        }
    }
    Ok((
        Metrics {
            mean_ctcvr: mean(&ctcvr),
            delta_ctcvr: None,
            compliance: compliance_rate(&compliant),
            diversity: diversity_metric(&div),
            structural: mean(&structural),
            semantic: mean(&semantic),
        },
        groups,
    ))
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone, Default)]
pub struct RunOutputs {
    /// Directory for `curves.csv`, checkpoints and traces; `None` keeps
    /// everything in memory.
    pub dir: Option<PathBuf>,
    /// Dump every step's advantage tensors as JSON.
    pub trace: bool,
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainRun {
    /// One record per step `0..=steps`; the last is taken after the final
    /// update and triggers no update itself.
    pub logs: Vec<StepLog>,
    /// Oracle metrics of the policy at the report step, with lift over the
    /// step-0 policy.
    pub report: Metrics,
    pub params: PolicyParams,
    pub reference: PolicyParams,
}

/// Runs `config.steps` updates, evaluating at the report step.
pub fn train(
    config: &TrainConfig,
    env: &Environment,
    reward_scorer: &dyn CtcvrScorer,
    eval_scorer: &dyn CtcvrScorer,
    outputs: &RunOutputs,
) -> Result<TrainRun> {
    let mut state = TrainState::new(config, env)?;
    let settings = EvalSettings::from_config(config);
    if let Some(dir) = &outputs.dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut logs = Vec::with_capacity(config.steps + 1);
    let mut report = None;
    for step in 0..=config.steps {
        if step == config.report_step() {
            report = Some(evaluate(
                &state.params,
                env,
                eval_scorer,
                &config.diversity,
                &settings,
                Some(&state.reference),
            )?);
        }
        let log = if step < config.steps {
            train_step(&mut state, env, reward_scorer, config)?
        } else {
            observe_step(&mut state, env, reward_scorer, config)?
        };
        if let Some(dir) = &outputs.dir {
            if outputs.trace {
                let trace_dir = dir.join("trace");
                std::fs::create_dir_all(&trace_dir).map_err(|e| Error::io(&trace_dir, e))?;
                crate::env::write_json(
                    &trace_dir.join(format!("advantages_{step}.json")),
                    &state.last_advantages,
                )?;
            }
            let done = state.step;
            let every = config.checkpoint_every;
            if every > 0 && step < config.steps && (done % every == 0 || done == config.steps) {
                state.params.save(&dir.join(format!("ckpt_{done}.json")), done as u64)?;
            }
        }
        logs.push(log);
    }
    if let Some(dir) = &outputs.dir {
        write_curves(&dir.join("curves.csv"), &logs)?;
    }
    Ok(TrainRun {
        logs,
        report: report.expect("report step is within 0..=steps"),
        params: state.params,
        reference: state.reference,
    })
}

pub fn write_curves(path: &Path, logs: &[StepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for log in logs {
        w.serialize(log)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curves(path: &Path) -> Result<Vec<StepLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
