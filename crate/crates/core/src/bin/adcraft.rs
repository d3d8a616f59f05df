use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adcraft::env::{label_dataset, oracle_ctcvr, write_json, Environment, OracleDataset, OracleParams, Vocabulary};
use adcraft::harness::{emit_report, load_report, render_text, run_ablation_with, training_dataset};
use adcraft::metrics::ranking_auc;
use adcraft::policy::PolicyParams;
use adcraft::rewards::{train_ctcvr_predictor, CtcvrPredictor};
use adcraft::trainer::{evaluate, initial_policy, train, EvalSettings, RunOutputs};
use adcraft::{load_config, ModelId, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "adcraft", version, about = "Train and ablate ad-text policies under multi-objective rewards")]
struct Cli {
    /// JSON run config; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Dump per-step advantage tensors as JSON under `<out-dir>/trace`.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write vocab.json, oracle.json and an oracle-labeled dataset.csv.
    GenEnv {
        /// Dataset rows; defaults to `predictor.train_rows`.
        #[arg(long)]
        rows: Option<usize>,
    },
    /// Fit the CTR/CTCVR predictor and write predictor.json.
    TrainPredictor {
        /// Defaults to `<out-dir>/dataset.csv`, generated if absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train one reward configuration; writes curves.csv, checkpoints and metrics.json.
    Train {
        /// Reward configuration (Model1..Model4, RELATE); defaults to the config's.
        #[arg(long)]
        model: Option<ModelId>,
        /// Defaults to `<out-dir>/predictor.json`, trained if absent.
        #[arg(long)]
        predictor: Option<PathBuf>,
    },
    /// Train all five configurations per seed and write report.json/report.txt.
    Ablate {
        /// Comma-separated seeds; defaults to `--seed` or 0,1,2,3,4.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Evaluate a checkpoint under the oracle against the step-0 policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Print a saved report; exits 2 if any comparison failed.
    Report {
        /// Defaults to `<out-dir>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| adcraft::Error::Io {
        path: dir.into(),
        source: e,
    })
}

/// Loads `vocab.json`/`oracle.json` from `dir` when both exist, else builds
/// the environment from the config and seed.
fn environment(config: &TrainConfig, dir: &Path) -> Result<Environment> {
    let (vocab_path, oracle_path) = (dir.join("vocab.json"), dir.join("oracle.json"));
    let mut env = Environment::build(&config.env, config.seed)?;
    if vocab_path.exists() && oracle_path.exists() {
        env.vocab = Vocabulary::load(&vocab_path)?;
        env.oracle = OracleParams::load(&oracle_path)?;
    }
    Ok(env)
}

fn predictor(config: &TrainConfig, env: &Environment, path: Option<&Path>, dir: &Path) -> Result<CtcvrPredictor> {
    let default = dir.join("predictor.json");
    match path {
        Some(p) => CtcvrPredictor::load(p),
        None if default.exists() => CtcvrPredictor::load(&default),
        None => {
            let data = training_dataset(config, env, config.seed)?;
            train_ctcvr_predictor(&data, &config.predictor, config.seed)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let mut config = match &cli.config {
        Some(p) => load_config(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out_dir.as_path();
    mkdir(out)?;

    match &cli.command {
        Command::GenEnv { rows } => {
            let env = Environment::build(&config.env, config.seed)?;
            env.vocab.save(&out.join("vocab.json"))?;
            env.oracle.save(&out.join("oracle.json"))?;
            let mut rows_config = config.clone();
            rows_config.predictor.train_rows = rows.unwrap_or(config.predictor.train_rows);
            let data = training_dataset(&rows_config, &env, config.seed)?;
            data.write_csv(&out.join("dataset.csv"))?;
            println!(
                "wrote {} tokens, oracle and {} rows to {}",
                env.vocab.len(),
                data.len(),
                out.display()
            );
        }
        Command::TrainPredictor { dataset } => {
            let env = environment(&config, out)?;
            let path = dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
            let data = if path.exists() {
                OracleDataset::read_csv(&path)?
            } else {
                training_dataset(&config, &env, config.seed)?
            };
            let model = train_ctcvr_predictor(&data, &config.predictor, config.seed)?;
            model.save(&out.join("predictor.json"))?;

            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
            let held_out = label_dataset(&env, 10_000, &mut rng)?;
            let mut predicted = Vec::with_capacity(held_out.len());
            let mut truth = Vec::with_capacity(held_out.len());
            for row in &held_out.rows {
                predicted.push(model.predict_ctcvr(&row.features)?);
                truth.push(oracle_ctcvr(&env.oracle, &row.features)?.ctcvr);
            }
            println!("held-out ranking AUC vs oracle CTCVR: {:.4}", ranking_auc(&predicted, &truth)?);
        }
        Command::Train { model, predictor: pred_path } => {
            if let Some(id) = model {
                config.ablation = adcraft::AblationConfig::row(*id);
            }
            config.validate()?;
            let env = environment(&config, out)?;
            let scorer = predictor(&config, &env, pred_path.as_deref(), out)?;
            let outputs = RunOutputs {
                dir: Some(out.to_path_buf()),
                trace: cli.trace,
            };
            let run = train(&config, &env, &scorer, &env.oracle, &outputs)?;
            run.params
                .save(&out.join(format!("ckpt_{}.json", config.steps)), config.steps as u64)?;
            write_json(&out.join("metrics.json"), &run.report)?;
            println!("{}", serde_json::to_string_pretty(&run.report)?);
        }
        Command::Ablate { seeds } => {
            let seeds = if !seeds.is_empty() {
                seeds.clone()
            } else if let Some(s) = cli.seed {
                vec![s]
            } else {
                (0..5).collect()
            };
            let report = run_ablation_with(&config, &seeds, Some(out), cli.trace)?;
            emit_report(&report, out)?;
            print!("{}", render_text(&report));
            return Ok(report.all_pass());
        }
        Command::Eval { checkpoint } => {
            let env = environment(&config, out)?;
            let (params, step) = PolicyParams::load(checkpoint)?;
            config.order = params.order();
            let baseline = initial_policy(&config, &env)?;
            let settings = EvalSettings::from_config(&config);
            let metrics = evaluate(&params, &env, &env.oracle, &config.diversity, &settings, Some(&baseline))?;
            write_json(&out.join("eval.json"), &metrics)?;
            println!("step {step}");
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Report { report } => {
            let path = report.clone().unwrap_or_else(|| out.join("report.json"));
            let report = load_report(&path)?;
            print!("{}", render_text(&report));
            return Ok(report.all_pass());
        }
    }
    Ok(true)
}
