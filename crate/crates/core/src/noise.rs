//! Label-noise models: transition matrices, seeded corruption of labels,
//! and the 10-class uniform off-diagonal fixtures.
//!
//! Entry `(i, j)` of a [`TransitionMatrix`] is `P(noisy = j | clean = i)`.
//! Labels are 0-based throughout.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, Provenance};
use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    entries: Array2<f64>,
}

impl TransitionMatrix {
    /// Validates squareness, entries in `[0, 1]` and unit row sums.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::mismatch("transition matrix columns", r, c));
        }
        if r < 2 {
            return Err(Error::param("transition matrix needs at least two classes"));
        }
        for (i, row) in entries.rows().into_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::param(format!(
                    "transition entry {v} in row {i} is not a probability"
                )));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::param(format!("row {i} sums to {s}, not 1")));
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(k: usize) -> Result<Self> {
        Self::new(Array2::eye(k))
    }

    /// Diagonal `1 - eta`, off-diagonal `eta / (k - 1)`.
    pub fn symmetric(k: usize, eta: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::param(format!("need k >= 2, got {k}")));
        }
        check_symmetric_rate(k, eta)?;
        let off = eta / (k - 1) as f64;
        Self::new(Array2::from_shape_fn((k, k), |(i, j)| {
            if i == j {
                1.0 - eta
            } else {
                off
            }
        }))
    }

    /// Off-diagonal entries of column `j` all equal `e[j]`; the diagonal
    /// absorbs the remainder of each row.
    pub fn uniform_off_diagonal(e: &[f64]) -> Result<Self> {
        check_off_diagonal_rates(e)?;
        let k = e.len();
        let total: f64 = e.iter().sum();
        Self::new(Array2::from_shape_fn((k, k), |(i, j)| {
            if i == j {
                1.0 - (total - e[i])
            } else {
                e[j]
            }
        }))
    }

    pub fn fixture(name: Fixture) -> Self {
        let e: &[f64] = match name {
            Fixture::Cifar10Low => &CIFAR10_LOW_RATES,
            Fixture::Cifar10High => &CIFAR10_HIGH_RATES,
        };
        let diag: &[f64] = match name {
            Fixture::Cifar10Low => &CIFAR10_LOW_DIAG,
            Fixture::Cifar10High => &CIFAR10_HIGH_DIAG,
        };
        // Entered verbatim: off-diagonal column values and the printed diagonal.
        let entries = Array2::from_shape_fn((10, 10), |(i, j)| if i == j { diag[i] } else { e[j] });
        Self::new(entries).expect("fixture matrices are row-stochastic")
    }

    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, clean: usize, noisy: usize) -> f64 {
        self.entries[[clean, noisy]]
    }

    /// The per-column flip rates `e` if every column is constant off the
    /// diagonal (within `tol`).
    pub fn off_diagonal_rates(&self, tol: f64) -> Option<Vec<f64>> {
        let k = self.k();
        let mut e = Vec::with_capacity(k);
        for j in 0..k {
            let r = if j == 0 { 1 } else { 0 };
            let v = self.entries[[r, j]];
            for i in 0..k {
                if i != j && (self.entries[[i, j]] - v).abs() > tol {
                    return None;
                }
            }
            e.push(v);
        }
        Some(e)
    }

    /// `k` lines of `k` comma-separated probabilities.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        for row in self.entries.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: "<transition matrix>".into(),
                        line: i + 1,
                        message: format!("not a probability: {c:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let k = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::mismatch("transition matrix row width", k, bad.len()));
        }
        let entries = Array2::from_shape_vec((k, k), rows.concat())
            .map_err(|e| Error::param(e.to_string()))?;
        Self::new(entries)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Named 10-class matrices used in the correction experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fixture {
    Cifar10Low,
    Cifar10High,
}

const CIFAR10_LOW_RATES: [f64; 10] = [
    0.02, 0.03, 0.01, 0.023, 0.017, 0.022, 0.021, 0.018, 0.019, 0.02,
];
const CIFAR10_LOW_DIAG: [f64; 10] = [
    0.82, 0.83, 0.81, 0.823, 0.817, 0.822, 0.821, 0.818, 0.819, 0.82,
];
const CIFAR10_HIGH_RATES: [f64; 10] = [0.05, 0.07, 0.04, 0.05, 0.06, 0.04, 0.06, 0.07, 0.08, 0.07];
const CIFAR10_HIGH_DIAG: [f64; 10] = [0.46, 0.48, 0.45, 0.46, 0.47, 0.45, 0.47, 0.48, 0.49, 0.48];

/// A noise model, as configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Symmetric { eta: f64 },
    UniformOffDiagonal { e: Vec<f64> },
    Custom { matrix: TransitionMatrix },
}

impl NoiseModel {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            NoiseModel::Symmetric { eta } => check_symmetric_rate(k, *eta),
            NoiseModel::UniformOffDiagonal { e } => {
                if e.len() != k {
                    return Err(Error::mismatch("flip-rate vector", k, e.len()));
                }
                check_off_diagonal_rates(e)
            }
            NoiseModel::Custom { matrix } => {
                if matrix.k() != k {
                    Err(Error::mismatch("transition matrix", k, matrix.k()))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn matrix(&self, k: usize) -> Result<TransitionMatrix> {
        self.validate(k)?;
        match self {
            NoiseModel::Symmetric { eta } => TransitionMatrix::symmetric(k, *eta),
            NoiseModel::UniformOffDiagonal { e } => TransitionMatrix::uniform_off_diagonal(e),
            NoiseModel::Custom { matrix } => Ok(matrix.clone()),
        }
    }

    /// Flip rates `e` for the models the corrections are defined for.
    /// Symmetric noise expands to `eta / (k - 1)` per class; custom
    /// matrices are rejected.
    pub fn off_diagonal_rates(&self, k: usize) -> Result<Vec<f64>> {
        self.validate(k)?;
        match self {
            NoiseModel::Symmetric { eta } => Ok(vec![eta / (k - 1) as f64; k]),
            NoiseModel::UniformOffDiagonal { e } => Ok(e.clone()),
            NoiseModel::Custom { .. } => Err(Error::param(
                "corrections are defined only for symmetric or uniform off-diagonal noise",
            )),
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Symmetric { eta } => write!(f, "sym({eta})"),
            NoiseModel::UniformOffDiagonal { e } => {
                let parts: Vec<String> = e.iter().map(|v| v.to_string()).collect();
                write!(f, "uod({})", parts.join(";"))
            }
            NoiseModel::Custom { matrix } => write!(f, "custom({}x{})", matrix.k(), matrix.k()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub model: NoiseModel,
    pub seed: u64,
}

fn check_symmetric_rate(k: usize, eta: f64) -> Result<()> {
    let limit = (k as f64 - 1.0) / k as f64;
    if !(eta >= 0.0 && eta < limit) {
        return Err(Error::param(format!(
            "symmetric noise rate must lie in [0, {limit}), got {eta}"
        )));
    }
    Ok(())
}

fn check_off_diagonal_rates(e: &[f64]) -> Result<()> {
    if e.len() < 2 {
        return Err(Error::param("need at least two flip rates"));
    }
    if let Some(v) = e.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::param(format!("flip rate {v} is negative")));
    }
    let total: f64 = e.iter().sum();
    if !(total < 1.0) {
        return Err(Error::param(format!("flip rates sum to {total}, need < 1")));
    }
    Ok(())
}

/// Replaces each label `y` by a draw from row `y` of `tm`.
///
/// Draw `i` comes from a ChaCha stream selected by the sample index, so the
/// result depends only on `(seed, i, y_i)` and not on evaluation order.
pub fn corrupt(ds: &LabeledDataset, tm: &TransitionMatrix, seed: u64) -> Result<LabeledDataset> {
    if ds.k != tm.k() {
        return Err(Error::mismatch("corrupt: class count", ds.k, tm.k()));
    }
    if !ds.is_clean() {
        return Err(Error::param("dataset labels are already corrupted"));
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = ds
        .labels
        .par_iter()
        .enumerate()
        .map(|(i, &y)| {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            draw_row(
                tm.entries.row(y).as_slice().expect("standard layout"),
                rng.random(),
            )
        })
        .collect();
    Ok(LabeledDataset {
        features: ds.features.clone(),
        labels,
        k: ds.k,
        provenance: Provenance::Corrupted {
            transition: tm.clone(),
            seed,
        },
    })
}

fn draw_row(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // rounding left the cumulative sum just under 1: take the last class with mass
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Row-normalized (clean -> noisy) count matrix. Classes that never occur
/// in `clean` get a one-hot diagonal row.
pub fn empirical_transition(
    clean: &LabeledDataset,
    noisy: &LabeledDataset,
) -> Result<TransitionMatrix> {
    if clean.len() != noisy.len() {
        return Err(Error::mismatch(
            "empirical_transition: samples",
            clean.len(),
            noisy.len(),
        ));
    }
    if clean.k != noisy.k {
        return Err(Error::mismatch(
            "empirical_transition: classes",
            clean.k,
            noisy.k,
        ));
    }
    if clean.features != noisy.features {
        return Err(Error::param(
            "empirical_transition: feature matrices differ",
        ));
    }
    let k = clean.k;
    let mut counts = Array2::<f64>::zeros((k, k));
    for (&a, &b) in clean.labels.iter().zip(&noisy.labels) {
        counts[[a, b]] += 1.0;
    }
    for (i, mut row) in counts.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        if s == 0.0 {
            row[i] = 1.0;
        } else {
            row /= s;
        }
    }
    // division can leave a row a few ulps off 1; renormalize the diagonal
    for i in 0..k {
        let s: f64 = counts.row(i).sum();
        counts[[i, i]] += 1.0 - s;
        if counts[[i, i]] < 0.0 {
            counts[[i, i]] = 0.0;
        }
    }
    TransitionMatrix::new(counts)
}
