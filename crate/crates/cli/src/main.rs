use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fpml::experiment::{parse_records, CorrectionMode};
use fpml::model::ModelFile;
use fpml::{
    corrupt, evaluate, read_labeled_csv, report, run_experiment, train, verify_theorems,
    Correction, ExperimentConfig, Fixture, NetworkModel, ObjectiveConfig, ReportFormat,
    TransitionMatrix,
};

#[derive(Parser)]
#[command(
    name = "fpml",
    version,
    about = "Posterior maximization learning with f-divergences under label noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Table,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
            Format::Table => ReportFormat::Table,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    None,
    Objective,
    Posterior,
    NoNoise,
}

impl From<Mode> for CorrectionMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::None => CorrectionMode::None,
            Mode::Objective => CorrectionMode::Objective,
            Mode::Posterior => CorrectionMode::Posterior,
            Mode::NoNoise => CorrectionMode::NoNoise,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Flip the labels of a CSV dataset through a transition matrix.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        /// `sym:ETA`, `uod:E0,E1,...` or `fixture:cifar10_low|cifar10_high`.
        #[arg(long, conflicts_with = "matrix")]
        noise: Option<String>,
        /// Transition matrix CSV (rows: clean class, columns: noisy class).
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model for one correction mode and save it as JSON.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "none")]
        correction: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved model on the clean test split of a config's dataset.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the oracle suite; exits with status 2 if any check fails.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the reports as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed and correction mode of a config.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Re-render saved records (CSV or JSON) in another format.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Error(anyhow::Error),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(2),
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.train.seeds = vec![seed];
    }
    Ok(cfg)
}

/// Parses `sym:ETA`, `uod:E0,E1,...` or `fixture:NAME` for `k` classes.
fn parse_noise(spec: &str, k: usize) -> Result<TransitionMatrix> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("noise spec {spec:?} should look like sym:0.3 or uod:0.1,0.3"))?;
    let tm = match kind {
        "sym" => {
            let eta: f64 = rest
                .trim()
                .parse()
                .with_context(|| format!("bad noise rate {rest:?}"))?;
            TransitionMatrix::symmetric(k, eta)?
        }
        "uod" => {
            let e = rest
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("bad flip rates {rest:?}"))?;
            TransitionMatrix::uniform_off_diagonal(&e)?
        }
        "fixture" => TransitionMatrix::fixture(match rest {
            "cifar10_low" => Fixture::Cifar10Low,
            "cifar10_high" => Fixture::Cifar10High,
            other => bail!("unknown fixture {other:?}"),
        }),
        other => bail!("unknown noise kind {other:?}"),
    };
    Ok(tm)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn objective_for(cfg: &ExperimentConfig, mode: CorrectionMode) -> Result<ObjectiveConfig> {
    let correction = match (mode, &cfg.noise) {
        (CorrectionMode::Objective, Some(n)) => Correction::Objective { noise: n.clone() },
        (CorrectionMode::Posterior, Some(n)) => Correction::Posterior { noise: n.clone() },
        (CorrectionMode::Objective | CorrectionMode::Posterior, None) => {
            bail!("correction {} needs a [noise] section", mode.label())
        }
        _ => Correction::None,
    };
    Ok(ObjectiveConfig {
        divergence: cfg.objective.divergence,
        correction,
    })
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Corrupt {
            input,
            noise,
            matrix,
            seed,
            out,
        } => {
            let ds =
                read_labeled_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            let tm = match (noise, matrix) {
                (_, Some(path)) => TransitionMatrix::read_csv(&path)
                    .with_context(|| format!("reading {}", path.display()))?,
                (Some(spec), None) => parse_noise(&spec, ds.k)?,
                (None, None) => return Err(anyhow!("pass --noise or --matrix").into()),
            };
            let noisy = corrupt(&ds, &tm, seed).map_err(anyhow::Error::from)?;
            noisy.write_csv(&out).map_err(anyhow::Error::from)?;
            let flipped = ds
                .labels
                .iter()
                .zip(&noisy.labels)
                .filter(|(a, b)| a != b)
                .count();
            eprintln!("flipped {flipped} of {} labels", ds.len());
        }
        Command::Train {
            cfg: args,
            correction,
            out,
        } => {
            let cfg = load_config(&args)?;
            let mode: CorrectionMode = correction.into();
            let seed = cfg.train.seeds[0];
            let objective = objective_for(&cfg, mode)?;
            let (train_set, test_set) = splits(&cfg, seed, mode)?;
            let spec = cfg.mlp_spec(train_set.dim(), train_set.k);
            let init = NetworkModel::init(spec, seed).map_err(anyhow::Error::from)?;
            // the posterior correction changes evaluation, not training
            let train_obj = match mode {
                CorrectionMode::Posterior => ObjectiveConfig::plain(objective.divergence),
                _ => objective.clone(),
            };
            let (model, trace) = train(
                init,
                &train_set,
                Some(&test_set),
                &train_obj,
                &cfg.train.train_config(seed),
            )
            .map_err(anyhow::Error::from)?;
            model
                .save_json(&out, Some(&objective))
                .map_err(anyhow::Error::from)?;
            let result = evaluate(&model, &test_set, &objective).map_err(anyhow::Error::from)?;
            let summary = serde_json::json!({
                "seed": seed,
                "correction": mode.label(),
                "epochs": trace.epochs.len(),
                "final_objective": trace.final_objective(),
                "test_accuracy": result.accuracy,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?
            );
        }
        Command::Eval { cfg: args, model } => {
            let cfg = load_config(&args)?;
            let file: ModelFile = NetworkModel::load_json(&model)
                .with_context(|| format!("loading {}", model.display()))?;
            let objective = match file.objective {
                Some(o) => o,
                None => objective_for(&cfg, CorrectionMode::None)?,
            };
            let seed = cfg.train.seeds[0];
            let (_, test_set) = splits(&cfg, seed, CorrectionMode::NoNoise)?;
            let result =
                evaluate(&file.model, &test_set, &objective).map_err(anyhow::Error::from)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result).map_err(anyhow::Error::from)?
            );
        }
        Command::Verify { seed, out } => {
            let reports = verify_theorems(seed, out.as_deref()).map_err(anyhow::Error::from)?;
            let mut failed = false;
            for r in &reports {
                println!(
                    "{} {:<48} trials={:<6} max_error={:.3e} threshold={:.1e}",
                    if r.pass { "PASS" } else { "FAIL" },
                    r.theorem_id,
                    r.trials,
                    r.max_error,
                    r.threshold
                );
                failed |= !r.pass;
            }
            if failed {
                return Err(Failure::Verification);
            }
        }
        Command::Sweep {
            cfg: args,
            out,
            format,
        } => {
            let cfg = load_config(&args)?;
            let records = run_experiment(&cfg).map_err(anyhow::Error::from)?;
            let format = format.map(ReportFormat::from).unwrap_or(cfg.output.format);
            let text = report(&records, format).map_err(anyhow::Error::from)?;
            let target = out.or_else(|| cfg.output.path.clone());
            write_or_print(target.as_deref(), &text)?;
        }
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let trimmed = text.trim_start();
            let in_format = if trimmed.starts_with('{') || trimmed.starts_with('[') {
                ReportFormat::Json
            } else {
                ReportFormat::Csv
            };
            let records = parse_records(&text, in_format).map_err(anyhow::Error::from)?;
            let rendered = report(&records, format.into()).map_err(anyhow::Error::from)?;
            write_or_print(out.as_deref(), &rendered)?;
        }
    }
    Ok(())
}

/// Training set for `mode` (noisy unless `NoNoise`) and the clean test split.
fn splits(
    cfg: &ExperimentConfig,
    seed: u64,
    mode: CorrectionMode,
) -> Result<(fpml::LabeledDataset, fpml::LabeledDataset)> {
    let split = cfg.split(seed)?;
    let train_set = match (&cfg.noise, mode) {
        (Some(n), m) if m != CorrectionMode::NoNoise => {
            let tm = n.matrix(split.train.k)?;
            corrupt(&split.train, &tm, fpml::experiment::corruption_seed(seed))?
        }
        _ => split.train,
    };
    Ok((train_set, split.test))
}
