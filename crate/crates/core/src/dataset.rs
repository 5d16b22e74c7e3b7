//! Labeled datasets: CSV ingestion with a seeded train/test split, and a
//! Gaussian-mixture generator with a closed-form Bayes posterior.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;

/// Where a dataset's labels came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Clean,
    Corrupted {
        transition: TransitionMatrix,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, k: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::param(format!(
                "dataset needs at least one sample and one feature, got {n}x{d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::mismatch("dataset labels", n, labels.len()));
        }
        if k < 2 {
            return Err(Error::param(format!("need at least two classes, got {k}")));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
            return Err(Error::param(format!("label {bad} outside [0, {k})")));
        }
        Ok(Self {
            features,
            labels,
            k,
            provenance: Provenance::Clean,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_clean(&self) -> bool {
        matches!(self.provenance, Provenance::Clean)
    }

    /// Rows `idx` in the given order, provenance preserved.
    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
            provenance: self.provenance.clone(),
        }
    }

    /// Seeded 80/20 split. At least one sample lands on each side.
    pub fn split(&self, seed: u64) -> Result<Split> {
        let n = self.len();
        if n < 2 {
            return Err(Error::param(format!(
                "cannot split a dataset of {n} sample(s) into train and test"
            )));
        }
        let n_train = ((n as f64 * TRAIN_FRACTION).floor() as usize).clamp(1, n - 1);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Split {
            train: self.select(&perm[..n_train]),
            test: self.select(&perm[n_train..]),
        })
    }

    /// Writes `features..., label` rows without a header.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for (row, &y) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Per-column affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `features`. Constant columns get unit scale.
    pub fn fit(features: &Array2<f64>) -> Self {
        let mean = features.mean_axis(Axis(0)).expect("non-empty features");
        let std = features.std_axis(Axis(0), 0.0);
        Self {
            mean: mean.to_vec(),
            std: std.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect(),
        }
    }

    pub fn apply(&self, features: &mut Array2<f64>) {
        let mean = ArrayView1::from(&self.mean);
        let std = ArrayView1::from(&self.std);
        for mut row in features.rows_mut() {
            row -= &mean;
            row /= &std;
        }
    }
}

/// Reads a numeric CSV (label in the last column, optional header), splits
/// it 80/20 with `seed`, and standardizes both halves with statistics from
/// the training half only.
pub fn load_csv(path: impl AsRef<Path>, seed: u64) -> Result<Split> {
    let ds = read_labeled_csv(path)?;
    let mut split = ds.split(seed)?;
    let scaler = Standardizer::fit(&split.train.features);
    scaler.apply(&mut split.train.features);
    scaler.apply(&mut split.test.features);
    Ok(split)
}

/// Reads a numeric CSV as-is: no split, no standardization.
pub fn read_labeled_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() < 2 {
            return Err(parse_err(
                line,
                "need at least one feature column and a label column".into(),
            ));
        }
        let numeric: Vec<Option<f64>> = rec.iter().map(|f| f.parse::<f64>().ok()).collect();
        if i == 0 && numeric.iter().any(Option::is_none) {
            // header
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_err(
                    line,
                    format!("expected {w} columns, found {}", rec.len()),
                ))
            }
            _ => {}
        }
        let fields: Vec<&str> = rec.iter().collect();
        let (label_field, feature_fields) = fields.split_last().expect("at least two columns");
        let mut row = Vec::with_capacity(feature_fields.len());
        for (c, field) in feature_fields.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    return Err(parse_err(
                        line,
                        format!("non-numeric feature {field:?} in column {}", c + 1),
                    ))
                }
            }
        }
        let label = label_field
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("label {label_field:?} is not a class index")))?;
        rows.push(row);
        labels.push(label);
    }

    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    let d = rows[0].len();
    let features =
        Array2::from_shape_vec((rows.len(), d), rows.concat()).expect("rows have equal width");
    let k = labels.iter().max().copied().unwrap_or(0) + 1;
    if k < 2 {
        return Err(parse_err(0, "labels must span at least two classes".into()));
    }
    LabeledDataset::new(features, labels, k)
}

/// Balanced mixture of unit-variance spherical Gaussians, one per class.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    /// `k x d` component means.
    pub means: Array2<f64>,
}

impl GaussianMixture {
    /// Means with pairwise (or neighbouring) distance `separation`, laid
    /// out in a random orthonormal frame.
    pub fn new(k: usize, d: usize, separation: f64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::param(format!("need k >= 2, got {k}")));
        }
        if d < 1 {
            return Err(Error::param("need d >= 1"));
        }
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::param(format!(
                "separation must be finite and non-negative, got {separation}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Layout coordinates in an m-dimensional subspace.
        let layout: Array2<f64> = if d >= k {
            // regular simplex: scaled standard basis vectors, distance = separation
            Array2::eye(k) * (separation / std::f64::consts::SQRT_2)
        } else if d >= 2 {
            // regular polygon with neighbouring chord = separation
            let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
            Array2::from_shape_fn((k, 2), |(i, c)| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                radius * if c == 0 { a.cos() } else { a.sin() }
            })
        } else {
            Array2::from_shape_fn((k, 1), |(i, _)| separation * i as f64)
        };
        let frame = random_orthonormal(layout.ncols(), d, &mut rng);
        Ok(Self {
            means: layout.dot(&frame),
        })
    }

    pub fn k(&self) -> usize {
        self.means.nrows()
    }

    /// Exact class posterior at `x` under equal priors.
    pub fn posterior(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let logits: Array1<f64> = self
            .means
            .rows()
            .into_iter()
            .map(|m| -0.5 * (&x - &m).mapv(|v| v * v).sum())
            .collect();
        softmax_vec(&logits)
    }

    /// Posterior rows for every sample.
    pub fn posteriors(&self, features: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((features.nrows(), self.k()));
        for (i, x) in features.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.posterior(x));
        }
        out
    }

    /// `n` samples, classes balanced (the first `n % k` classes get one extra).
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset> {
        let k = self.k();
        if n < k {
            return Err(Error::param(format!("need n >= k, got n={n}, k={k}")));
        }
        let d = self.means.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        labels.shuffle(&mut rng);
        let mut features = Array2::zeros((n, d));
        for (mut row, &y) in features.rows_mut().into_iter().zip(&labels) {
            for (v, &m) in row.iter_mut().zip(self.means.row(y)) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = m + z;
            }
        }
        LabeledDataset::new(features, labels, k)
    }
}

/// Balanced Gaussian mixture dataset; see [`GaussianMixture`].
pub fn make_synthetic(
    k: usize,
    n: usize,
    d: usize,
    class_separation: f64,
    seed: u64,
) -> Result<(LabeledDataset, GaussianMixture)> {
    let mix = GaussianMixture::new(k, d, class_separation, seed)?;
    // Separate stream for samples so the frame and draws are independent.
    let ds = mix.sample(n, seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
    Ok((ds, mix))
}

fn random_orthonormal(m: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    // Gram-Schmidt on Gaussian rows; m <= d.
    let mut basis: Array2<f64> = Array2::zeros((m, d));
    let mut i = 0;
    while i < m {
        let mut v: Array1<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for j in 0..i {
            let b = basis.row(j);
            let proj = v.dot(&b);
            v.scaled_add(-proj, &b);
        }
        let norm = v.dot(&v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        basis.row_mut(i).assign(&(v / norm));
        i += 1;
    }
    basis
}

pub(crate) fn softmax_vec(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}
