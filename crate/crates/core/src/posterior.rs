//! Posterior estimates from network outputs, MAP prediction, and the
//! test-time posterior correction for uniform off-diagonal label noise.
//!
//! A network trained on noisy labels converges to
//! `p_noisy(i|x) = (1 - sum e) p(i|x) + e_i`; subtracting `e_i` leaves a
//! positive multiple of the clean posterior, so the argmax is restored.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::divergence::Divergence;
use crate::error::{Error, Result};

/// Estimated `p(y | x)` rows. `normalized` is set when rows were rescaled
/// onto the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    pub values: Array2<f64>,
    pub normalized: bool,
}

impl PosteriorMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    /// Rows clamped at zero and rescaled to sum to one, for reporting.
    /// Rows with no positive mass become uniform.
    pub fn normalized(&self) -> PosteriorMatrix {
        let k = self.values.ncols();
        let mut values = self.values.mapv(|v| v.max(0.0));
        for mut row in values.rows_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            } else {
                row.fill(1.0 / k as f64);
            }
        }
        PosteriorMatrix {
            values,
            normalized: true,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        for row in self.values.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Elementwise `(f*)'(T)`. Rows are not renormalized.
pub fn estimate_posterior(div: Divergence, t: ArrayView2<f64>) -> Result<PosteriorMatrix> {
    let mut values = Array2::zeros(t.dim());
    for (out, &tv) in values.iter_mut().zip(t.iter()) {
        *out = div.conj_prime(tv)?;
    }
    Ok(PosteriorMatrix::new(values))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise MAP class.
pub fn predict(p: &PosteriorMatrix) -> Vec<usize> {
    p.values.rows().into_iter().map(argmax).collect()
}

fn check_rates(e: &[f64], k: usize) -> Result<f64> {
    if e.len() != k {
        return Err(Error::mismatch("flip-rate vector", k, e.len()));
    }
    if e.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::param("flip rates must be non-negative"));
    }
    let total: f64 = e.iter().sum();
    if !(total < 1.0) {
        return Err(Error::param(format!("flip rates sum to {total}, need < 1")));
    }
    Ok(total)
}

/// Limiting noisy posterior `(1 - sum e) p_i + e_i`.
pub fn noisy_posterior_forward(clean_p: ArrayView1<f64>, e: &[f64]) -> Result<Array1<f64>> {
    let total = check_rates(e, clean_p.len())?;
    if clean_p.iter().any(|&v| !(v >= 0.0)) || (clean_p.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::param("clean posterior is not on the simplex"));
    }
    Ok(clean_p
        .iter()
        .zip(e)
        .map(|(&p, &ei)| (1.0 - total) * p + ei)
        .collect())
}

/// Subtracts `e_i` from column `i`. Negative results are kept so the argmax
/// is exactly that of the corrected estimate.
pub fn posterior_correct(noisy_p: ArrayView2<f64>, e: &[f64]) -> Result<PosteriorMatrix> {
    check_rates(e, noisy_p.ncols())?;
    let mut values = noisy_p.to_owned();
    for mut row in values.rows_mut() {
        for (v, &ei) in row.iter_mut().zip(e) {
            *v -= ei;
        }
    }
    Ok(PosteriorMatrix::new(values))
}

/// [`posterior_correct`] followed by division by `1 - sum e`, which maps the
/// limiting noisy posterior back onto the clean one.
pub fn posterior_correct_rescaled(noisy_p: ArrayView2<f64>, e: &[f64]) -> Result<PosteriorMatrix> {
    let total = check_rates(e, noisy_p.ncols())?;
    let mut out = posterior_correct(noisy_p, e)?;
    out.values /= 1.0 - total;
    Ok(out)
}

/// Symmetric noise leaves the MAP rule unchanged iff `eta < (k - 1) / k`.
pub fn is_noise_tolerant_regime(k: usize, eta: f64) -> bool {
    k >= 2 && eta >= 0.0 && eta < (k as f64 - 1.0) / k as f64
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::mismatch("accuracy", labels.len(), preds.len()));
    }
    if preds.is_empty() {
        return Err(Error::param("accuracy of an empty prediction set"));
    }
    let hits = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / preds.len() as f64)
}
