//! Experiment configuration, seeded multi-run orchestration, and result
//! reporting.
//!
//! One run per seed: split the data, corrupt the training labels (the test
//! split stays clean), train once per correction mode and evaluate on the
//! test split.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_csv, make_synthetic, Split};
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::model::{evaluate, train, Activation, MlpSpec, NetworkModel, OutputHead, TrainConfig};
use crate::noise::{corrupt, NoiseModel};
use crate::objective::{Correction, ObjectiveConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    /// Numeric CSV, label in the last column.
    Csv { path: PathBuf },
    Synthetic {
        k: usize,
        n: usize,
        d: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Softmax outputs, fed to the objective through `f'`.
    Simplex,
    /// Unconstrained outputs squashed into the conjugate domain.
    RawT,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_head")]
    pub head: HeadKind,
}

fn default_hidden() -> Vec<usize> {
    vec![32]
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_head() -> HeadKind {
    HeadKind::Simplex
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            activation: default_activation(),
            head: default_head(),
        }
    }
}

/// Training runs compared within one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    None,
    Objective,
    Posterior,
    /// Trained on the clean labels.
    NoNoise,
}

impl CorrectionMode {
    pub const ALL: [CorrectionMode; 4] = [
        CorrectionMode::None,
        CorrectionMode::Objective,
        CorrectionMode::Posterior,
        CorrectionMode::NoNoise,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CorrectionMode::None => "none",
            CorrectionMode::Objective => "objective",
            CorrectionMode::Posterior => "posterior",
            CorrectionMode::NoNoise => "no_noise",
        }
    }

    fn from_label(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::param(format!("unknown correction mode {s:?}")))
    }

    /// Column heading in the text table.
    pub fn heading(self) -> &'static str {
        match self {
            CorrectionMode::None => "No Cor.",
            CorrectionMode::Objective => "O.F. Cor.",
            CorrectionMode::Posterior => "P. Cor.",
            CorrectionMode::NoNoise => "No Noise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub divergence: Divergence,
    #[serde(default = "default_modes")]
    pub corrections: Vec<CorrectionMode>,
}

fn default_modes() -> Vec<CorrectionMode> {
    CorrectionMode::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr0: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_batch() -> usize {
    TrainConfig::default().batch_size
}
fn default_lr() -> f64 {
    TrainConfig::default().lr0
}
fn default_momentum() -> f64 {
    TrainConfig::default().momentum
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr0: default_lr(),
            momentum: default_momentum(),
            seeds: default_seeds(),
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr0: self.lr0,
            momentum: self.momentum,
            seed,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
    Table,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "table" | "text-table" => Ok(ReportFormat::Table),
            other => Err(Error::param(format!(
                "unknown format {other:?} (csv, json, table)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    pub objective: ObjectiveSection,
    /// Label noise on the training split; absent means clean labels.
    pub noise: Option<NoiseModel>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates; relative dataset paths resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DatasetSection::Csv { path: data } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
            if !data.exists() {
                return Err(Error::Config(format!(
                    "dataset file {} does not exist",
                    data.display()
                )));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        if self.train.seeds.is_empty() {
            return cfg_err("train.seeds must not be empty".into());
        }
        if self.objective.corrections.is_empty() {
            return cfg_err("objective.corrections must not be empty".into());
        }
        if self.model.hidden.contains(&0) {
            return cfg_err("model.hidden widths must be positive".into());
        }
        if let DatasetSection::Synthetic {
            k,
            n,
            d,
            separation,
            ..
        } = self.dataset
        {
            if k < 2 || n < k || d == 0 || !(separation >= 0.0) {
                return cfg_err(format!(
                    "synthetic dataset needs k >= 2, n >= k, d >= 1, separation >= 0 (got k={k}, n={n}, d={d}, separation={separation})"
                ));
            }
        }
        let needs_rates = self
            .objective
            .corrections
            .iter()
            .any(|m| matches!(m, CorrectionMode::Objective | CorrectionMode::Posterior));
        if needs_rates && matches!(self.noise, Some(NoiseModel::Custom { .. })) {
            return cfg_err("corrections need symmetric or uniform_off_diagonal noise".into());
        }
        self.train
            .train_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn mlp_spec(&self, d: usize, k: usize) -> MlpSpec {
        let mut layer_sizes = vec![d];
        layer_sizes.extend(&self.model.hidden);
        layer_sizes.push(k);
        MlpSpec {
            layer_sizes,
            activation: self.model.activation,
            head: match self.model.head {
                HeadKind::Simplex => OutputHead::SimplexD,
                HeadKind::RawT => OutputHead::RawT(self.objective.divergence),
            },
        }
    }

    /// Train/test split of the configured dataset for one run seed.
    pub fn split(&self, seed: u64) -> Result<Split> {
        match &self.dataset {
            DatasetSection::Csv { path } => load_csv(path, seed),
            DatasetSection::Synthetic {
                k,
                n,
                d,
                separation,
                seed: data_seed,
            } => make_synthetic(*k, *n, *d, *separation, *data_seed)?
                .0
                .split(seed),
        }
    }
}

/// One trained-and-evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub seed: u64,
    pub divergence: Divergence,
    /// Noise descriptor, e.g. `uod(0.1;0.3)`, `sym(0.3)` or `none`.
    pub noise: String,
    pub correction: CorrectionMode,
    /// Accuracy on the clean test split.
    pub test_accuracy: f64,
    /// Accuracy against the (possibly noisy) labels trained on.
    pub train_accuracy: f64,
    pub final_objective: f64,
    pub wall_seconds: f64,
}

impl ResultRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        } == Self {
            wall_seconds: 0.0,
            ..other.clone()
        }
    }
}

/// Seed of the label corruption in the run with seed `seed`.
pub fn corruption_seed(seed: u64) -> u64 {
    seed ^ 0xD1B5_4A32_D192_ED03
}

fn with_context(seed: u64, mode: CorrectionMode) -> impl Fn(Error) -> Error {
    move |e| Error::Config(format!("seed {seed}, correction {}: {e}", mode.label()))
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<ResultRecord>> {
    let split = cfg.split(seed)?;
    let k = split.train.k;
    let tm = cfg.noise.as_ref().map(|n| n.matrix(k)).transpose()?;
    let noisy_train = match &tm {
        Some(tm) => corrupt(&split.train, tm, corruption_seed(seed))?,
        None => split.train.clone(),
    };
    assert!(
        split.test.is_clean(),
        "test split must keep its clean labels"
    );
    let noise_label = cfg
        .noise
        .as_ref()
        .map_or_else(|| "none".to_string(), |n| n.to_string());
    let div = cfg.objective.divergence;
    let spec = cfg.mlp_spec(split.train.dim(), k);
    let train_cfg = cfg.train.train_config(seed);

    let mut plain_noisy: Option<(NetworkModel, f64, f64, f64)> = None;
    let mut out = Vec::new();
    for &mode in &cfg.objective.corrections {
        let ctx = with_context(seed, mode);
        let start = Instant::now();
        let correction = match (mode, &cfg.noise) {
            (CorrectionMode::Objective, Some(n)) => Correction::Objective { noise: n.clone() },
            (CorrectionMode::Posterior, Some(n)) => Correction::Posterior { noise: n.clone() },
            _ => Correction::None,
        };
        let objective = ObjectiveConfig {
            divergence: div,
            correction,
        };
        let data = if mode == CorrectionMode::NoNoise {
            &split.train
        } else {
            &noisy_train
        };

        // the posterior correction is applied at test time to the plainly trained model
        let reuse = matches!(mode, CorrectionMode::None | CorrectionMode::Posterior);
        let (model, train_acc, final_obj, train_secs) = match (&plain_noisy, reuse) {
            (Some(cached), true) => cached.clone(),
            _ => {
                let init = NetworkModel::init(spec.clone(), seed).map_err(&ctx)?;
                let plain = ObjectiveConfig::plain(div);
                let train_obj = if mode == CorrectionMode::Posterior {
                    &plain
                } else {
                    &objective
                };
                let (model, trace) =
                    train(init, data, None, train_obj, &train_cfg).map_err(&ctx)?;
                let train_acc = trace.epochs.last().map_or(f64::NAN, |e| e.train_accuracy);
                let final_obj = trace.final_objective().unwrap_or(f64::NAN);
                let secs = start.elapsed().as_secs_f64();
                let entry = (model, train_acc, final_obj, secs);
                if reuse {
                    plain_noisy = Some(entry.clone());
                }
                entry
            }
        };
        let eval_start = Instant::now();
        let result = evaluate(&model, &split.test, &objective).map_err(&ctx)?;
        out.push(ResultRecord {
            seed,
            divergence: div,
            noise: noise_label.clone(),
            correction: mode,
            test_accuracy: result.accuracy,
            train_accuracy: train_acc,
            final_objective: final_obj,
            wall_seconds: train_secs + eval_start.elapsed().as_secs_f64(),
        });
    }
    Ok(out)
}

/// Runs every seed (in parallel) and returns records ordered by seed, then
/// by the configured correction order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let per_seed = cfg
        .train
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Mean and sample standard deviation of test accuracy for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub divergence: Divergence,
    pub noise: String,
    pub correction: CorrectionMode,
    pub runs: usize,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups by `(divergence, noise, correction)`, sorted by that key.
pub fn summarize(records: &[ResultRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::param("no records to summarize"));
    }
    let mut groups: BTreeMap<(Divergence, String, CorrectionMode), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.divergence, r.noise.clone(), r.correction))
            .or_default()
            .push(r.test_accuracy);
    }
    Ok(groups
        .into_iter()
        .map(|((divergence, noise, correction), acc)| {
            let (mean, std) = mean_std(&acc);
            SummaryRow {
                divergence,
                noise,
                correction,
                runs: acc.len(),
                mean_test_accuracy: mean,
                std_test_accuracy: std,
            }
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    records: Vec<ResultRecord>,
    summary: Vec<SummaryRow>,
}

/// Serializes records. CSV holds the records; JSON holds records and the
/// group summary; the table shows mean ± std test accuracy (percent) with
/// one column per correction mode.
pub fn report(records: &[ResultRecord], format: ReportFormat) -> Result<String> {
    let summary = summarize(records)?;
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(CsvRecord::from(r))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
        }
        ReportFormat::Json => Ok(serde_json::to_string_pretty(&JsonReport {
            records: records.to_vec(),
            summary,
        })?),
        ReportFormat::Table => Ok(table(&summary)),
    }
}

/// Flat CSV row; the correction mode is written by label.
#[derive(Serialize, Deserialize)]
struct CsvRecord {
    seed: u64,
    divergence: Divergence,
    noise: String,
    correction: String,
    test_accuracy: f64,
    train_accuracy: f64,
    final_objective: f64,
    wall_seconds: f64,
}

impl From<&ResultRecord> for CsvRecord {
    fn from(r: &ResultRecord) -> Self {
        Self {
            seed: r.seed,
            divergence: r.divergence,
            noise: r.noise.clone(),
            correction: r.correction.label().to_string(),
            test_accuracy: r.test_accuracy,
            train_accuracy: r.train_accuracy,
            final_objective: r.final_objective,
            wall_seconds: r.wall_seconds,
        }
    }
}

/// Reads records back from CSV or JSON report output.
pub fn parse_records(text: &str, format: ReportFormat) -> Result<Vec<ResultRecord>> {
    match format {
        ReportFormat::Csv => {
            let mut rd = csv::Reader::from_reader(text.as_bytes());
            rd.deserialize::<CsvRecord>()
                .map(|row| {
                    let row = row?;
                    Ok(ResultRecord {
                        seed: row.seed,
                        divergence: row.divergence,
                        noise: row.noise,
                        correction: CorrectionMode::from_label(&row.correction)?,
                        test_accuracy: row.test_accuracy,
                        train_accuracy: row.train_accuracy,
                        final_objective: row.final_objective,
                        wall_seconds: row.wall_seconds,
                    })
                })
                .collect()
        }
        ReportFormat::Json => {
            let v: serde_json::Value = serde_json::from_str(text)?;
            // accept either a full report or a bare record array
            let records = if v.is_array() {
                v
            } else {
                v["records"].clone()
            };
            Ok(serde_json::from_value(records)?)
        }
        ReportFormat::Table => Err(Error::param(
            "text tables cannot be parsed back into records",
        )),
    }
}

fn table(summary: &[SummaryRow]) -> String {
    let mut rows: BTreeMap<(Divergence, String), BTreeMap<CorrectionMode, &SummaryRow>> =
        BTreeMap::new();
    for s in summary {
        rows.entry((s.divergence, s.noise.clone()))
            .or_default()
            .insert(s.correction, s);
    }
    let cell = |s: Option<&&SummaryRow>| match s {
        Some(s) => format!(
            "{:.2} ± {:.2}",
            100.0 * s.mean_test_accuracy,
            100.0 * s.std_test_accuracy
        ),
        None => "-".to_string(),
    };
    let mut header = vec!["Divergence".to_string(), "Noise".to_string()];
    header.extend(CorrectionMode::ALL.iter().map(|m| m.heading().to_string()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|((div, noise), cols)| {
            let mut r = vec![div.to_string().to_uppercase(), noise.clone()];
            r.extend(CorrectionMode::ALL.iter().map(|m| cell(cols.get(m))));
            r
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            std::iter::once(&header)
                .chain(&body)
                .map(|r| r[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in std::iter::once(&header).chain(&body) {
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, mode: CorrectionMode, acc: f64) -> ResultRecord {
        ResultRecord {
            seed,
            divergence: Divergence::Kl,
            noise: "uod(0.1;0.3)".into(),
            correction: mode,
            test_accuracy: acc,
            train_accuracy: 0.9,
            final_objective: -0.25,
            wall_seconds: 0.5,
        }
    }

    const SMALL: &str = r#"
        [dataset]
        source = "synthetic"
        k = 2
        n = 300
        d = 3
        separation = 4.0

        [objective]
        divergence = "kl"
        corrections = ["none", "objective", "posterior", "no_noise"]

        [noise]
        kind = "uniform_off_diagonal"
        e = [0.1, 0.3]

        [train]
        epochs = 5
        seeds = [0, 1]
    "#;

    #[test]
    fn parses_config_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
        assert_eq!(cfg.model, ModelSection::default());
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.output.format, ReportFormat::Csv);
        assert_eq!(cfg.mlp_spec(3, 2).layer_sizes, vec![3, 32, 2]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = SMALL.replace("epochs = 5", "epochs = 5\nepoch = 4");
        assert!(matches!(
            ExperimentConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        let bad = SMALL.replace("separation = 4.0", "separation = 4.0\nsep = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = SMALL.replace("seeds = [0, 1]", "seeds = []");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn missing_csv_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        let text = SMALL.replace(
            "source = \"synthetic\"\n        k = 2\n        n = 300\n        d = 3\n        separation = 4.0",
            "source = \"csv\"\n        path = \"nope.csv\"",
        );
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            ExperimentConfig::load(&path),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn runs_are_deterministic_and_ordered() {
        let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert!(a.iter().zip(&b).all(|(x, y)| x.same_outcome(y)));
        let order: Vec<(u64, CorrectionMode)> = a.iter().map(|r| (r.seed, r.correction)).collect();
        assert_eq!(order[0], (0, CorrectionMode::None));
        assert_eq!(order[4], (1, CorrectionMode::None));
        assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.test_accuracy)));
    }

    #[test]
    fn zero_rates_objective_correction_matches_plain() {
        let text = SMALL.replace("e = [0.1, 0.3]", "e = [0.0, 0.0]");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let recs = run_experiment(&cfg).unwrap();
        for seed in [0, 1] {
            let get = |m| {
                recs.iter()
                    .find(|r| r.seed == seed && r.correction == m)
                    .unwrap()
            };
            let (a, b) = (get(CorrectionMode::None), get(CorrectionMode::Objective));
            assert_eq!(a.test_accuracy, b.test_accuracy);
            assert_eq!(a.final_objective, b.final_objective);
        }
    }

    #[test]
    fn single_record_has_zero_std() {
        let s = summarize(&[record(0, CorrectionMode::None, 0.9)]).unwrap();
        assert_eq!(s[0].std_test_accuracy, 0.0);
        assert!(summarize(&[]).is_err());
        assert!(report(&[], ReportFormat::Csv).is_err());
    }

    #[test]
    fn summary_statistics() {
        let recs = [
            record(0, CorrectionMode::None, 0.9),
            record(1, CorrectionMode::None, 0.8),
        ];
        let s = summarize(&recs).unwrap();
        assert!((s[0].mean_test_accuracy - 0.85).abs() < 1e-15);
        assert!((s[0].std_test_accuracy - 0.005f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_json_csv_round_trip() {
        let recs: Vec<_> = CorrectionMode::ALL
            .iter()
            .enumerate()
            .map(|(i, &m)| record(i as u64, m, 0.1 * i as f64 + 0.123_456_789_012_345_6))
            .collect();
        let csv1 = report(&recs, ReportFormat::Csv).unwrap();
        let back = parse_records(&csv1, ReportFormat::Csv).unwrap();
        let json = report(&back, ReportFormat::Json).unwrap();
        let again = parse_records(&json, ReportFormat::Json).unwrap();
        let csv2 = report(&again, ReportFormat::Csv).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(again, recs);
    }

    #[test]
    fn table_has_one_column_per_correction_mode() {
        let recs = [
            record(0, CorrectionMode::None, 0.921),
            record(0, CorrectionMode::NoNoise, 0.982),
        ];
        let t = report(&recs, ReportFormat::Table).unwrap();
        let header = t.lines().next().unwrap();
        let cols = ["No Cor.", "O.F. Cor.", "P. Cor.", "No Noise"];
        let pos: Vec<usize> = cols.iter().map(|c| header.find(c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(t.contains("92.10 ± 0.00"));
        assert!(t.contains("98.20 ± 0.00"));
    }

    #[test]
    fn format_names() {
        assert_eq!(
            "table".parse::<ReportFormat>().unwrap(),
            ReportFormat::Table
        );
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
