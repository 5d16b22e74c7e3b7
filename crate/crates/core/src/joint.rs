//! Finite joint distributions over `M` abstract points and `K` classes.
//! Expectations under them are closed sums, so theorem identities can be
//! checked without sampling error.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::noise::TransitionMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pmf: Array2<f64>,
}

impl DiscreteJoint {
    /// `pmf[[m, j]] = p(x_m, y = j)`; non-negative, sums to one, every
    /// point has positive mass.
    pub fn new(pmf: Array2<f64>) -> Result<Self> {
        let (m, k) = pmf.dim();
        if m == 0 || k < 2 {
            return Err(Error::param(format!(
                "joint needs M >= 1 and K >= 2, got {m}x{k}"
            )));
        }
        if pmf.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::param(
                "joint probabilities must be finite and non-negative",
            ));
        }
        let total = pmf.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param(format!("joint sums to {total}, not 1")));
        }
        if let Some(i) = pmf.sum_axis(Axis(1)).iter().position(|&p| p <= 0.0) {
            return Err(Error::param(format!("point {i} has zero marginal mass")));
        }
        Ok(Self { pmf })
    }

    /// Random joint with all entries bounded away from zero.
    pub fn random<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Self {
        let mut pmf = Array2::from_shape_fn((m, k), |_| rng.random_range(0.05..1.0));
        let s = pmf.sum();
        pmf /= s;
        Self::new(pmf).expect("normalized positive table")
    }

    /// Joint assembled from a marginal over points and per-point posteriors.
    pub fn from_parts(p_x: &Array1<f64>, posterior: &Array2<f64>) -> Result<Self> {
        if posterior.nrows() != p_x.len() {
            return Err(Error::mismatch(
                "joint posterior rows",
                p_x.len(),
                posterior.nrows(),
            ));
        }
        let mut pmf = posterior.clone();
        for (mut row, &px) in pmf.rows_mut().into_iter().zip(p_x) {
            row *= px;
        }
        Self::new(pmf)
    }

    pub fn m(&self) -> usize {
        self.pmf.nrows()
    }

    pub fn k(&self) -> usize {
        self.pmf.ncols()
    }

    pub fn pmf(&self) -> &Array2<f64> {
        &self.pmf
    }

    pub fn p_x(&self) -> Array1<f64> {
        self.pmf.sum_axis(Axis(1))
    }

    pub fn p_y(&self) -> Array1<f64> {
        self.pmf.sum_axis(Axis(0))
    }

    /// `p(y | x_m)` rows.
    pub fn posterior(&self) -> Array2<f64> {
        let px = self.p_x();
        let mut post = self.pmf.clone();
        for (mut row, &p) in post.rows_mut().into_iter().zip(&px) {
            row /= p;
        }
        post
    }

    /// Joint of `(X, noisy Y)` when labels pass through `tm`.
    pub fn noisy(&self, tm: &TransitionMatrix) -> Result<Self> {
        if tm.k() != self.k() {
            return Err(Error::mismatch("noisy joint: classes", self.k(), tm.k()));
        }
        let pmf = self.pmf.dot(tm.entries());
        // preserve the validity check but tolerate accumulated rounding
        let s = pmf.sum();
        Self::new(pmf / s)
    }

    /// Probability that the MAP rule is correct: `sum_m max_j p(x_m, j)`.
    pub fn bayes_accuracy(&self) -> f64 {
        self.pmf
            .rows()
            .into_iter()
            .map(|r| r.fold(0.0f64, |a, &b| a.max(b)))
            .sum()
    }
}
