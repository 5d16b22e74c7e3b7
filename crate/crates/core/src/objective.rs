//! The posterior-maximization objective
//!
//! ```text
//! J(T) = E_XY[ T(x, y) ] - E_X[ sum_i f*(T(x, i)) ]
//! ```
//!
//! its per-sample gradients, the label-noise bias terms and the corrected
//! objective, the active/passive split, the change-of-variable forms used
//! with a softmax head, and closed-sum evaluators on [`DiscreteJoint`]s.
//!
//! Under uniform off-diagonal noise with flip rates `e` the noisy objective
//! satisfies `J_noisy = (1 - sum e) J_clean + B(T)` with
//!
//! ```text
//! B(T) = E_X[ sum_j ( e_j T(x, j) - (sum_i e_i) f*(T(x, j)) ) ]
//! ```
//!
//! so subtracting `B` restores the clean maximizer.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::joint::DiscreteJoint;
use crate::noise::{NoiseModel, TransitionMatrix};

/// Which correction (if any) is applied for label noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Correction {
    #[default]
    None,
    /// Subtract the bias term from the training objective.
    Objective { noise: NoiseModel },
    /// Subtract the flip rates from the posterior estimate at test time.
    Posterior { noise: NoiseModel },
}

impl Correction {
    pub fn label(&self) -> &'static str {
        match self {
            Correction::None => "none",
            Correction::Objective { .. } => "objective",
            Correction::Posterior { .. } => "posterior",
        }
    }

    /// Flip rates used during training, if the objective is corrected.
    pub fn training_rates(&self, k: usize) -> Result<Option<Vec<f64>>> {
        match self {
            Correction::Objective { noise } => noise.off_diagonal_rates(k).map(Some),
            _ => Ok(None),
        }
    }

    /// Flip rates subtracted from posteriors at test time, if any.
    pub fn test_rates(&self, k: usize) -> Result<Option<Vec<f64>>> {
        match self {
            Correction::Posterior { noise } => noise.off_diagonal_rates(k).map(Some),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub divergence: Divergence,
    #[serde(default)]
    pub correction: Correction,
}

impl ObjectiveConfig {
    pub fn plain(divergence: Divergence) -> Self {
        Self {
            divergence,
            correction: Correction::None,
        }
    }
}

fn check_label(label: usize, k: usize) -> Result<()> {
    if label >= k {
        Err(Error::param(format!("label {label} outside [0, {k})")))
    } else {
        Ok(())
    }
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

fn check_batch(t: &ArrayView2<f64>, labels: &[usize]) -> Result<()> {
    if t.nrows() != labels.len() {
        return Err(Error::mismatch(
            "objective batch labels",
            t.nrows(),
            labels.len(),
        ));
    }
    if t.nrows() == 0 {
        return Err(Error::param("empty batch"));
    }
    Ok(())
}

/// Per-sample value `T(x, y) - sum_i f*(T(x, i))`.
pub fn jf_sample(div: Divergence, t_row: ArrayView1<f64>, label: usize) -> Result<f64> {
    check_label(label, t_row.len())?;
    let mut conj_sum = 0.0;
    for &t in t_row {
        conj_sum += div.conj(t)?;
    }
    Ok(t_row[label] - conj_sum)
}

/// Batch mean of [`jf_sample`].
pub fn jf_batch(div: Divergence, t: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_batch(&t, labels)?;
    let mut total = 0.0;
    for (row, &y) in t.rows().into_iter().zip(labels) {
        total += jf_sample(div, row, y)?;
    }
    Ok(total / labels.len() as f64)
}

/// `d/dT_i = 1{i = y} - (f*)'(T_i)`, the ascent direction.
pub fn jf_grad_sample(
    div: Divergence,
    t_row: ArrayView1<f64>,
    label: usize,
) -> Result<Array1<f64>> {
    check_label(label, t_row.len())?;
    let mut g = Array1::zeros(t_row.len());
    for (i, &t) in t_row.iter().enumerate() {
        g[i] = f64::from(u8::from(i == label)) - div.conj_prime(t)?;
    }
    Ok(g)
}

/// Per-sample bias `sum_j e_j T_j - (sum e) sum_j f*(T_j)`.
pub fn bias_sample(div: Divergence, t_row: ArrayView1<f64>, e: &[f64]) -> Result<f64> {
    let total = check_rates(e, t_row.len())?;
    let mut lin = 0.0;
    let mut conj_sum = 0.0;
    for (&t, &ej) in t_row.iter().zip(e) {
        lin += ej * t;
        conj_sum += div.conj(t)?;
    }
    Ok(lin - total * conj_sum)
}

/// Binary bias term, batch mean over the rows of `t` (`N x 2`).
pub fn bias_binary(div: Divergence, t: ArrayView2<f64>, e0: f64, e1: f64) -> Result<f64> {
    if t.ncols() != 2 {
        return Err(Error::mismatch("binary bias columns", 2, t.ncols()));
    }
    if !(e0 + e1 < 1.0) {
        return Err(Error::param(format!("e0 + e1 = {} must be < 1", e0 + e1)));
    }
    bias_multiclass(div, t, &[e0, e1])
}

/// Multi-class bias term for uniform off-diagonal noise, batch mean.
pub fn bias_multiclass(div: Divergence, t: ArrayView2<f64>, e: &[f64]) -> Result<f64> {
    check_rates(e, t.ncols())?;
    if t.nrows() == 0 {
        return Err(Error::param("empty batch"));
    }
    let mut total = 0.0;
    for row in t.rows() {
        total += bias_sample(div, row, e)?;
    }
    Ok(total / t.nrows() as f64)
}

/// Noisy-label objective with the bias subtracted, batch mean.
pub fn corrected_jf_batch(
    div: Divergence,
    t: ArrayView2<f64>,
    labels: &[usize],
    e: &[f64],
) -> Result<f64> {
    check_batch(&t, labels)?;
    check_rates(e, t.ncols())?;
    let mut total = 0.0;
    for (row, &y) in t.rows().into_iter().zip(labels) {
        total += corrected_sample(div, row, y, e)?;
    }
    Ok(total / labels.len() as f64)
}

pub fn corrected_sample(
    div: Divergence,
    t_row: ArrayView1<f64>,
    label: usize,
    e: &[f64],
) -> Result<f64> {
    Ok(jf_sample(div, t_row, label)? - bias_sample(div, t_row, e)?)
}

/// `[1{j = y} - (f*)'(T_j)] - [e_j - (sum e) (f*)'(T_j)]`.
pub fn corrected_grad_sample(
    div: Divergence,
    t_row: ArrayView1<f64>,
    label: usize,
    e: &[f64],
) -> Result<Array1<f64>> {
    let total = check_rates(e, t_row.len())?;
    let mut g = jf_grad_sample(div, t_row, label)?;
    for (j, (&t, &ej)) in t_row.iter().zip(e).enumerate() {
        g[j] -= ej - total * div.conj_prime(t)?;
    }
    Ok(g)
}

/// Value and T-gradient of the per-sample training objective, corrected
/// when `rates` is given.
pub fn sample_value_and_grad(
    div: Divergence,
    t_row: ArrayView1<f64>,
    label: usize,
    rates: Option<&[f64]>,
) -> Result<(f64, Array1<f64>)> {
    match rates {
        None => Ok((
            jf_sample(div, t_row, label)?,
            jf_grad_sample(div, t_row, label)?,
        )),
        Some(e) => Ok((
            corrected_sample(div, t_row, label, e)?,
            corrected_grad_sample(div, t_row, label, e)?,
        )),
    }
}

/// Splits the per-sample objective into the part that depends only on the
/// label coordinate and the part that depends only on the others:
///
/// ```text
/// active  = T(x, y) - f*(T(x, y))
/// passive = -sum_{i != y} f*(T(x, i))
/// ```
pub fn active_passive_split(
    div: Divergence,
    t_row: ArrayView1<f64>,
    label: usize,
) -> Result<(f64, f64)> {
    check_label(label, t_row.len())?;
    let ty = t_row[label];
    let active = ty - div.conj(ty)?;
    let mut passive = 0.0;
    for (i, &t) in t_row.iter().enumerate() {
        if i != label {
            passive -= div.conj(t)?;
        }
    }
    Ok((active, passive))
}

fn check_simplex(d_row: ArrayView1<f64>) -> Result<()> {
    if d_row.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::param("simplex row has a negative component"));
    }
    let s = d_row.sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::param(format!("simplex row sums to {s}")));
    }
    Ok(())
}

fn check_positive_row(d_row: ArrayView1<f64>) -> Result<()> {
    match d_row.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        Some(&v) => Err(Error::Domain {
            what: "change-of-variable output",
            value: v,
            domain: "(0, inf)".into(),
        }),
        None => Ok(()),
    }
}

/// KL objective under `T = log(D) + 1` with a softmax head:
/// `log D_y - 1`, i.e. negative cross-entropy shifted by `-1`.
pub fn jf_simplex_kl(d_row: ArrayView1<f64>, label: usize) -> Result<f64> {
    check_label(label, d_row.len())?;
    check_simplex(d_row)?;
    let dy = d_row[label];
    if dy <= 0.0 {
        return Err(Error::Domain {
            what: "softmax output at label",
            value: dy,
            domain: "(0, 1]".into(),
        });
    }
    Ok(dy.ln() - 1.0)
}

/// GAN objective under `T = log(D / (D + 1))`:
/// `log(D_y / (D_y + 1)) + sum_i log(1 / (D_i + 1))`.
pub fn jf_simplex_gan(d_row: ArrayView1<f64>, label: usize) -> Result<f64> {
    check_label(label, d_row.len())?;
    check_positive_row(d_row)?;
    let dy = d_row[label];
    let passive: f64 = d_row.iter().map(|&d| -d.ln_1p()).sum();
    Ok((dy / (dy + 1.0)).ln() + passive)
}

/// SL objective under `T = -1 / (D + 1)`:
/// `-1 / (D_y + 1) + sum_i [ -1 / (D_i + 1) + log(1 / (D_i + 1)) ]`.
pub fn jf_simplex_sl(d_row: ArrayView1<f64>, label: usize) -> Result<f64> {
    check_label(label, d_row.len())?;
    check_positive_row(d_row)?;
    let dy = d_row[label];
    let passive: f64 = d_row.iter().map(|&d| -1.0 / (d + 1.0) - d.ln_1p()).sum();
    Ok(-1.0 / (dy + 1.0) + passive)
}

pub fn jf_simplex(div: Divergence, d_row: ArrayView1<f64>, label: usize) -> Result<f64> {
    match div {
        Divergence::Kl => jf_simplex_kl(d_row, label),
        Divergence::Gan => jf_simplex_gan(d_row, label),
        Divergence::Sl => jf_simplex_sl(d_row, label),
    }
}

/// Gradient of the change-of-variable objective with respect to the
/// (unconstrained) components of `D`: `(1{i = y} - D_i) f''(D_i)`.
///
/// For KL this differs from the derivative of `log D_y - 1` by the constant
/// vector `-1`, which is annihilated by the softmax Jacobian.
pub fn jf_simplex_grad(
    div: Divergence,
    d_row: ArrayView1<f64>,
    label: usize,
) -> Result<Array1<f64>> {
    check_label(label, d_row.len())?;
    check_positive_row(d_row)?;
    let mut g = Array1::zeros(d_row.len());
    for (i, &d) in d_row.iter().enumerate() {
        g[i] = (f64::from(u8::from(i == label)) - d) * div.generator_second(d)?;
    }
    Ok(g)
}

/// Gradient of the change-of-variable objective with respect to the logits
/// `v` of `D = softmax(v)`.
pub fn jf_simplex_logit_grad(
    div: Divergence,
    d_row: ArrayView1<f64>,
    label: usize,
) -> Result<Array1<f64>> {
    check_label(label, d_row.len())?;
    check_positive_row(d_row)?;
    let t_grad: Array1<f64> = d_row
        .iter()
        .enumerate()
        .map(|(i, &d)| f64::from(u8::from(i == label)) - d)
        .collect();
    Ok(softmax_head_backward(div, d_row, t_grad.view()))
}

/// `u f''(u)`, finite as `u -> 0`.
pub(crate) fn scaled_generator_second(div: Divergence, u: f64) -> f64 {
    match div {
        Divergence::Kl => 1.0,
        Divergence::Gan => 1.0 / (u + 1.0),
        Divergence::Sl => u / ((u + 1.0) * (u + 1.0)),
    }
}

/// Chains a T-gradient through `T = f'(D)`, `D = softmax(v)`:
/// with `w_i = dJ/dT_i * D_i f''(D_i)`, `dJ/dv_k = w_k - D_k sum_i w_i`.
pub(crate) fn softmax_head_backward(
    div: Divergence,
    d_row: ArrayView1<f64>,
    t_grad: ArrayView1<f64>,
) -> Array1<f64> {
    let w: Array1<f64> = d_row
        .iter()
        .zip(t_grad)
        .map(|(&d, &g)| g * scaled_generator_second(div, d))
        .collect();
    let s = w.sum();
    &w - &(d_row.to_owned() * s)
}

fn check_table(joint: &DiscreteJoint, t: &ArrayView2<f64>) -> Result<()> {
    if t.dim() != (joint.m(), joint.k()) {
        return Err(Error::mismatch(
            "T table size",
            joint.m() * joint.k(),
            t.nrows() * t.ncols(),
        ));
    }
    Ok(())
}

/// `sum_{m,j} p(x_m, j) T_mj - sum_m p(x_m) sum_j f*(T_mj)`.
pub fn exact_jf(div: Divergence, joint: &DiscreteJoint, t: ArrayView2<f64>) -> Result<f64> {
    check_table(joint, &t)?;
    exact_from_pmf(div, joint.pmf(), &joint.p_x(), t)
}

/// [`exact_jf`] under the joint of `(X, noisy Y)`, labels passed through `tm`.
pub fn exact_jf_noisy(
    div: Divergence,
    joint: &DiscreteJoint,
    tm: &TransitionMatrix,
    t: ArrayView2<f64>,
) -> Result<f64> {
    check_table(joint, &t)?;
    if tm.k() != joint.k() {
        return Err(Error::mismatch(
            "transition matrix classes",
            joint.k(),
            tm.k(),
        ));
    }
    let noisy_pmf = joint.pmf().dot(tm.entries());
    exact_from_pmf(div, &noisy_pmf, &joint.p_x(), t)
}

/// Exact bias term `E_X[ sum_j e_j T_j - (sum e) sum_j f*(T_j) ]`.
pub fn exact_bias(
    div: Divergence,
    joint: &DiscreteJoint,
    e: &[f64],
    t: ArrayView2<f64>,
) -> Result<f64> {
    check_table(joint, &t)?;
    let px = joint.p_x();
    let mut total = 0.0;
    for (row, &p) in t.rows().into_iter().zip(&px) {
        total += p * bias_sample(div, row, e)?;
    }
    Ok(total)
}

fn exact_from_pmf(
    div: Divergence,
    pmf: &Array2<f64>,
    p_x: &Array1<f64>,
    t: ArrayView2<f64>,
) -> Result<f64> {
    let mut lin = 0.0;
    let mut conj = 0.0;
    for ((t_row, p_row), &px) in t.rows().into_iter().zip(pmf.rows()).zip(p_x) {
        let mut conj_row = 0.0;
        for (&tv, &pv) in t_row.iter().zip(p_row) {
            lin += pv * tv;
            conj_row += div.conj(tv)?;
        }
        conj += px * conj_row;
    }
    Ok(lin - conj)
}
