use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{config_hash, prepare_seed};
use crate::config::{AblationConfig, ModelId, TrainConfig};
use crate::error::{Error, Result};
use crate::trainer::{train, Metrics, RunOutputs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: ModelId,
    pub seed: u64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Ok {
        /// Oracle evaluation at the report step.
        metrics: Metrics,
        /// Batch compliance logged at step 0 and at the report step.
        compliance_step0: f64,
        compliance_report: f64,
    },
    Failed {
        error: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Greater,
    Less,
    GreaterOrEqual,
}

impl Relation {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::Greater => lhs > rhs,
            Relation::Less => lhs < rhs,
            Relation::GreaterOrEqual => lhs >= rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Greater => ">",
            Relation::Less => "<",
            Relation::GreaterOrEqual => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub seed: u64,
    /// `None` when a cell the comparison needs failed.
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub holds: bool,
}

/// One directional claim checked on every seed at the report step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub id: String,
    pub description: String,
    pub relation: Relation,
    pub per_seed: Vec<SeedComparison>,
    pub holds: usize,
    /// Seeds that must agree: `ceil(0.8 * seeds)`.
    pub required: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub report_step: usize,
    pub cells: Vec<CellResult>,
    /// The five reward-configuration trends.
    pub comparisons: Vec<Comparison>,
    /// Compliance trajectory and CTCVR lift checks.
    pub checks: Vec<Comparison>,
}

impl AblationReport {
    /// True when every directional comparison reaches its seed quorum.
    pub fn all_pass(&self) -> bool {
        self.comparisons.iter().all(|c| c.pass)
    }

    pub fn cell(&self, config: ModelId, seed: u64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.config == config && c.seed == seed)
    }
}

pub(crate) fn required_seeds(n: usize) -> usize {
    (4 * n).div_ceil(5)
}

/// Trains all five reward configurations for each seed, with every
/// configuration of a seed sharing one environment and one predictor, then
/// checks the directional trends at the report step. A failing cell is
/// recorded and the run continues.
pub fn run_ablation(base: &TrainConfig, seeds: &[u64], out_dir: Option<&Path>) -> Result<AblationReport> {
    run_ablation_with(base, seeds, out_dir, false)
}

/// [`run_ablation`] that can also dump every cell's advantage tensors.
pub fn run_ablation_with(
    base: &TrainConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    trace: bool,
) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(Error::Precondition("ablation needs at least one seed".into()));
    }
    base.validate()?;
    let mut cells = Vec::with_capacity(seeds.len() * ModelId::ALL.len());
    for &seed in seeds {
        let setup = prepare_seed(base, seed);
        for id in ModelId::ALL {
            let outcome = match &setup {
                Err(e) => CellOutcome::Failed {
                    error: format!("seed setup: {e}"),
                },
                Ok(setup) => {
                    let mut config = base.clone();
                    config.seed = seed;
                    config.ablation = AblationConfig::row(id);
                    let outputs = RunOutputs {
                        dir: out_dir.map(|d| d.join(format!("seed_{seed}")).join(id.as_str())),
                        trace,
                    };
                    match train(&config, &setup.env, &setup.predictor, &setup.env.oracle, &outputs) {
                        Ok(run) => CellOutcome::Ok {
                            metrics: run.report,
                            compliance_step0: run.logs[0].compliance,
                            compliance_report: run.logs[config.report_step()].compliance,
                        },
                        Err(e) => CellOutcome::Failed {
                            error: e.to_string(),
                        },
                    }
                }
            };
            cells.push(CellResult {
                config: id,
                seed,
                outcome,
            });
        }
    }

    let metric = |f: fn(&Metrics) -> f64| {
        move |c: &CellOutcome| match c {
            CellOutcome::Ok { metrics, .. } => Some(f(metrics)),
            CellOutcome::Failed { .. } => None,
        }
    };
    let compliance_report = |c: &CellOutcome| match c {
        CellOutcome::Ok {
            compliance_report, ..
        } => Some(*compliance_report),
        CellOutcome::Failed { .. } => None,
    };
    let compliance_step0 = |c: &CellOutcome| match c {
        CellOutcome::Ok {
            compliance_step0, ..
        } => Some(*compliance_step0),
        CellOutcome::Failed { .. } => None,
    };
    let lift = |c: &CellOutcome| match c {
        CellOutcome::Ok { metrics, .. } => metrics.delta_ctcvr,
        CellOutcome::Failed { .. } => None,
    };

    let ctx = Ctx { cells: &cells, seeds };
    let comparisons = vec![
        ctx.compare(
            "a",
            "Model2 CTCVR > Model1 CTCVR",
            (ModelId::Model2, &metric(|m| m.mean_ctcvr)),
            Relation::Greater,
            (ModelId::Model1, &metric(|m| m.mean_ctcvr)),
        ),
        ctx.compare(
            "b",
            "Model2 diversity < Model1 diversity",
            (ModelId::Model2, &metric(|m| m.diversity)),
            Relation::Less,
            (ModelId::Model1, &metric(|m| m.diversity)),
        ),
        ctx.compare(
            "c",
            "Model3 diversity > Model2 diversity",
            (ModelId::Model3, &metric(|m| m.diversity)),
            Relation::Greater,
            (ModelId::Model2, &metric(|m| m.diversity)),
        ),
        ctx.compare(
            "d",
            "RELATE diversity >= Model4 diversity",
            (ModelId::Relate, &metric(|m| m.diversity)),
            Relation::GreaterOrEqual,
            (ModelId::Model4, &metric(|m| m.diversity)),
        ),
        ctx.compare(
            "e",
            "RELATE semantic >= Model4 semantic",
            (ModelId::Relate, &metric(|m| m.semantic)),
            Relation::GreaterOrEqual,
            (ModelId::Model4, &metric(|m| m.semantic)),
        ),
    ];
    let zero = |_: &CellOutcome| Some(0.0);
    let checks = vec![
        ctx.compare(
            "compliance_gain",
            "RELATE batch compliance at report step > at step 0",
            (ModelId::Relate, &compliance_report),
            Relation::Greater,
            (ModelId::Relate, &compliance_step0),
        ),
        ctx.compare(
            "compliance_vs_model2",
            "RELATE batch compliance > Model2 batch compliance at report step",
            (ModelId::Relate, &compliance_report),
            Relation::Greater,
            (ModelId::Model2, &compliance_report),
        ),
        ctx.compare(
            "model2_lift",
            "Model2 oracle CTCVR lift over the step-0 policy > 0",
            (ModelId::Model2, &lift),
            Relation::Greater,
            (ModelId::Model2, &zero),
        ),
    ];

    Ok(AblationReport {
        config_hash: config_hash(base),
        seeds: seeds.to_vec(),
        report_step: base.report_step(),
        cells,
        comparisons,
        checks,
    })
}

type Extract<'a> = (ModelId, &'a dyn Fn(&CellOutcome) -> Option<f64>);

struct Ctx<'a> {
    cells: &'a [CellResult],
    seeds: &'a [u64],
}

impl Ctx<'_> {
    fn value(&self, (id, f): Extract<'_>, seed: u64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.config == id && c.seed == seed)
            .and_then(|c| f(&c.outcome))
    }

    fn compare(
        &self,
        id: &str,
        description: &str,
        lhs: Extract<'_>,
        relation: Relation,
        rhs: Extract<'_>,
    ) -> Comparison {
        let per_seed: Vec<SeedComparison> = self
            .seeds
            .iter()
            .map(|&seed| {
                let l = self.value(lhs, seed);
                let r = self.value(rhs, seed);
                let holds = matches!((l, r), (Some(l), Some(r)) if relation.holds(l, r));
                SeedComparison {
                    seed,
                    lhs: l,
                    rhs: r,
                    holds,
                }
            })
            .collect();
        let holds = per_seed.iter().filter(|s| s.holds).count();
        let required = required_seeds(self.seeds.len());
        Comparison {
            id: id.into(),
            description: description.into(),
            relation,
            per_seed,
            holds,
            required,
            pass: holds >= required,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quorum_is_four_of_five() {
        assert_eq!(required_seeds(1), 1);
        assert_eq!(required_seeds(2), 2);
        assert_eq!(required_seeds(5), 4);
        assert_eq!(required_seeds(10), 8);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(matches!(
            run_ablation(&TrainConfig::default(), &[], None),
            Err(Error::Precondition(_))
        ));
    }
}
