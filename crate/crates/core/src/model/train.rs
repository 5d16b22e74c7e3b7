use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{Gradients, NetworkModel, OutputHead};
use crate::dataset::LabeledDataset;
use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::objective::{corrected_jf_batch, jf_batch, Correction, ObjectiveConfig};
use crate::posterior::{accuracy, estimate_posterior, posterior_correct, predict, PosteriorMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr0: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
    /// Keep a copy of the parameters every this many epochs; 0 disables.
    #[serde(default)]
    pub snapshot_every: usize,
}

fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.02
}
fn default_momentum() -> f64 {
    0.9
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            lr0: default_lr(),
            momentum: default_momentum(),
            seed: 0,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::param(format!(
                "lr0 must be positive, got {}",
                self.lr0
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Cosine decay from `lr0` at the first step to zero at the last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    pub lr0: f64,
    pub total_steps: usize,
}

impl CosineSchedule {
    pub fn lr(&self, step: usize) -> f64 {
        if self.total_steps <= 1 {
            return self.lr0;
        }
        let frac = step.min(self.total_steps - 1) as f64 / (self.total_steps - 1) as f64;
        self.lr0 * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Heavy-ball momentum in the ascent direction: `v = mu v + g; theta += lr v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(momentum: f64, n_params: usize) -> Self {
        Self {
            momentum,
            velocity: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        for ((p, v), &g) in params.iter_mut().zip(&mut self.velocity).zip(grad) {
            *v = self.momentum * *v + g;
            *p += lr * *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training objective over the epoch's mini-batches.
    pub objective: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
    pub snapshots: Vec<(usize, NetworkModel)>,
}

impl TrainTrace {
    pub fn final_objective(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.objective)
    }
}

fn batch_features(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), idx)
}

/// Mini-batch SGD with momentum on the (possibly corrected) objective.
///
/// Returns the trained network and the per-epoch trace. Training is
/// single-threaded and fully determined by `config.seed` and the initial model.
pub fn train(
    mut model: NetworkModel,
    train_set: &LabeledDataset,
    test_set: Option<&LabeledDataset>,
    objective: &ObjectiveConfig,
    config: &TrainConfig,
) -> Result<(NetworkModel, TrainTrace)> {
    config.validate()?;
    model.check_objective(objective)?;
    check_dataset(&model, train_set)?;
    if let Some(t) = test_set {
        check_dataset(&model, t)?;
    }
    let k = model.spec.outputs();
    let rates = objective.correction.training_rates(k)?;
    objective.correction.test_rates(k)?;
    let div = objective.divergence;

    let n = train_set.len();
    if n == 0 {
        return Err(Error::param("empty training set"));
    }
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let schedule = CosineSchedule {
        lr0: config.lr0,
        total_steps: batches_per_epoch * config.epochs,
    };
    let mut params = model.params_flat();
    let mut opt = SgdMomentum::new(config.momentum, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = TrainTrace::default();
    let mut step = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let x = batch_features(&train_set.features, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train_set.labels[i]).collect();
            let (value, grads) = model.objective_gradient(x.view(), &y, div, rates.as_deref())?;
            let flat = grads.flat();
            if !value.is_finite() || flat.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    value: if value.is_finite() { f64::NAN } else { value },
                });
            }
            weighted += value * chunk.len() as f64;
            opt.step(&mut params, &flat, schedule.lr(step));
            model.set_params_flat(&params)?;
            step += 1;
        }
        let train_accuracy = accuracy(
            &predict_labels(&model, train_set, &Correction::None, div)?,
            &train_set.labels,
        )?;
        let test_accuracy = match test_set {
            Some(t) => Some(evaluate(&model, t, objective)?.accuracy),
            None => None,
        };
        trace.epochs.push(EpochStats {
            epoch,
            objective: weighted / n as f64,
            train_accuracy,
            test_accuracy,
        });
        if config.snapshot_every > 0 && (epoch + 1) % config.snapshot_every == 0 {
            trace.snapshots.push((epoch, model.clone()));
        }
    }
    Ok((model, trace))
}

fn check_dataset(model: &NetworkModel, ds: &LabeledDataset) -> Result<()> {
    if ds.dim() != model.spec.inputs() {
        return Err(Error::mismatch(
            "dataset feature width",
            model.spec.inputs(),
            ds.dim(),
        ));
    }
    if ds.k != model.spec.outputs() {
        return Err(Error::mismatch(
            "dataset classes",
            model.spec.outputs(),
            ds.k,
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Mean of the training objective (corrected when configured) on this set.
    pub objective: f64,
}

/// Posterior estimate from raw head outputs. The simplex head already
/// outputs `D = (f*)'(f'(D))`.
pub fn posterior_from_outputs(
    head: OutputHead,
    div: Divergence,
    outputs: ArrayView2<f64>,
) -> Result<PosteriorMatrix> {
    match head {
        OutputHead::RawT(_) => estimate_posterior(div, outputs),
        OutputHead::SimplexD => Ok(PosteriorMatrix::new(outputs.to_owned())),
    }
}

fn apply_test_correction(
    p: PosteriorMatrix,
    correction: &Correction,
    k: usize,
) -> Result<PosteriorMatrix> {
    match correction.test_rates(k)? {
        Some(e) => posterior_correct(p.values.view(), &e),
        None => Ok(p),
    }
}

fn predict_labels(
    model: &NetworkModel,
    ds: &LabeledDataset,
    correction: &Correction,
    div: Divergence,
) -> Result<Vec<usize>> {
    let out = model.forward(ds.features.view())?;
    let p = posterior_from_outputs(model.head(), div, out.view())?;
    Ok(predict(&apply_test_correction(p, correction, ds.k)?))
}

/// Test accuracy (with the posterior correction applied when configured)
/// and the mean objective on `ds`.
pub fn evaluate(
    model: &NetworkModel,
    ds: &LabeledDataset,
    objective: &ObjectiveConfig,
) -> Result<EvalResult> {
    model.check_objective(objective)?;
    check_dataset(model, ds)?;
    let div = objective.divergence;
    let t = model.t_outputs(ds.features.view(), div)?;
    evaluate_t(div, t.view(), &ds.labels, &objective.correction)
}

/// [`evaluate`] on a precomputed table of objective inputs `T`.
pub fn evaluate_t(
    div: Divergence,
    t: ArrayView2<f64>,
    labels: &[usize],
    correction: &Correction,
) -> Result<EvalResult> {
    let k = t.ncols();
    let p = apply_test_correction(estimate_posterior(div, t)?, correction, k)?;
    let acc = accuracy(&predict(&p), labels)?;
    let objective = match correction.training_rates(k)? {
        Some(e) => corrected_jf_batch(div, t, labels, &e)?,
        None => jf_batch(div, t, labels)?,
    };
    Ok(EvalResult {
        accuracy: acc,
        objective,
    })
}

/// Gradient of the mean objective over a batch, for callers that drive
/// their own optimizer.
pub fn batch_gradient(
    model: &NetworkModel,
    ds: &LabeledDataset,
    objective: &ObjectiveConfig,
) -> Result<(f64, Gradients)> {
    let rates = objective.correction.training_rates(ds.k)?;
    model.objective_gradient(
        ds.features.view(),
        &ds.labels,
        objective.divergence,
        rates.as_deref(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_synthetic;
    use crate::model::network::{Activation, MlpSpec};
    use crate::noise::NoiseModel;
    use ndarray::array;

    fn mlp(d: usize, k: usize, head: OutputHead) -> MlpSpec {
        MlpSpec {
            layer_sizes: vec![d, 8, k],
            activation: Activation::Tanh,
            head,
        }
    }

    fn all_heads() -> Vec<(Divergence, OutputHead)> {
        let mut v = Vec::new();
        for div in Divergence::ALL {
            v.push((div, OutputHead::RawT(div)));
            v.push((div, OutputHead::SimplexD));
        }
        v
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / (na + nb).max(1e-8)
    }

    #[test]
    fn schedule_endpoints() {
        let s = CosineSchedule {
            lr0: 0.02,
            total_steps: 11,
        };
        assert_eq!(s.lr(0), 0.02);
        assert!((s.lr(5) - 0.01).abs() < 1e-15);
        assert!(s.lr(10).abs() < 1e-15);
        assert_eq!(
            CosineSchedule {
                lr0: 0.5,
                total_steps: 1
            }
            .lr(0),
            0.5
        );
    }

    #[test]
    fn momentum_accumulates() {
        let mut opt = SgdMomentum::new(0.5, 1);
        let mut p = [0.0];
        opt.step(&mut p, &[1.0], 1.0);
        opt.step(&mut p, &[1.0], 1.0);
        assert_eq!(p[0], 2.5);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (ds, _) = make_synthetic(3, 12, 4, 2.0, 3).unwrap();
        for (div, head) in all_heads() {
            for correction in [
                Correction::None,
                Correction::Objective {
                    noise: NoiseModel::Symmetric { eta: 0.3 },
                },
            ] {
                let obj = ObjectiveConfig {
                    divergence: div,
                    correction,
                };
                let model = NetworkModel::init(mlp(4, 3, head), 7).unwrap();
                let (_, g) = batch_gradient(&model, &ds, &obj).unwrap();
                let base = model.params_flat();
                let mut fd = vec![0.0; base.len()];
                let mut probe = model.clone();
                for i in 0..base.len() {
                    let h = 1e-6 * base[i].abs().max(1.0);
                    let mut p = base.clone();
                    p[i] += h;
                    probe.set_params_flat(&p).unwrap();
                    let up = batch_gradient(&probe, &ds, &obj).unwrap().0;
                    p[i] -= 2.0 * h;
                    probe.set_params_flat(&p).unwrap();
                    let down = batch_gradient(&probe, &ds, &obj).unwrap().0;
                    fd[i] = (up - down) / (2.0 * h);
                }
                let e = rel_err(&g.flat(), &fd);
                assert!(e < 1e-5, "{div} {head:?}: {e}");
            }
        }
    }

    #[test]
    fn batch_gradient_is_mean_of_sample_gradients() {
        let (ds, _) = make_synthetic(2, 10, 3, 2.0, 1).unwrap();
        let obj = ObjectiveConfig::plain(Divergence::Gan);
        let model = NetworkModel::init(mlp(3, 2, OutputHead::RawT(Divergence::Gan)), 2).unwrap();
        let full = batch_gradient(&model, &ds, &obj).unwrap().1.flat();
        let mut sum = vec![0.0; full.len()];
        for i in 0..ds.len() {
            let one = ds.select(&[i]);
            for (s, g) in sum
                .iter_mut()
                .zip(batch_gradient(&model, &one, &obj).unwrap().1.flat())
            {
                *s += g / ds.len() as f64;
            }
        }
        assert!(rel_err(&full, &sum) < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let (ds, _) = make_synthetic(3, 60, 4, 3.0, 5).unwrap();
        let obj = ObjectiveConfig::plain(Divergence::Sl);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 7,
            ..TrainConfig::default()
        };
        let run = || {
            let m = NetworkModel::init(mlp(4, 3, OutputHead::RawT(Divergence::Sl)), 1).unwrap();
            train(m, &ds, None, &obj, &cfg).unwrap()
        };
        let (a, ta) = run();
        let (b, tb) = run();
        assert_eq!(a, b);
        assert_eq!(ta.epochs, tb.epochs);
    }

    #[test]
    fn zero_epochs_leaves_parameters() {
        let (ds, _) = make_synthetic(2, 20, 2, 3.0, 5).unwrap();
        let m = NetworkModel::init(mlp(2, 2, OutputHead::SimplexD), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, trace) = train(
            m.clone(),
            &ds,
            None,
            &ObjectiveConfig::plain(Divergence::Kl),
            &cfg,
        )
        .unwrap();
        assert_eq!(out, m);
        assert!(trace.epochs.is_empty());
    }

    #[test]
    fn separable_data_is_learned() {
        let (ds, _) = make_synthetic(3, 300, 4, 12.0, 11).unwrap();
        for (div, head) in all_heads() {
            let m = NetworkModel::init(mlp(4, 3, head), 3).unwrap();
            let obj = ObjectiveConfig::plain(div);
            let cfg = TrainConfig {
                epochs: 100,
                ..TrainConfig::default()
            };
            let (m, trace) = train(m, &ds, Some(&ds), &obj, &cfg).unwrap();
            let acc = evaluate(&m, &ds, &obj).unwrap().accuracy;
            assert!(acc >= 0.99, "{div} {head:?}: {acc}");
            assert_eq!(trace.epochs.len(), 100);
        }
    }

    #[test]
    fn snapshots_follow_interval() {
        let (ds, _) = make_synthetic(2, 30, 2, 3.0, 5).unwrap();
        let m = NetworkModel::init(mlp(2, 2, OutputHead::SimplexD), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 7,
            snapshot_every: 3,
            ..TrainConfig::default()
        };
        let (_, trace) =
            train(m, &ds, None, &ObjectiveConfig::plain(Divergence::Kl), &cfg).unwrap();
        let at: Vec<usize> = trace.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(at, vec![2, 5]);
    }

    #[test]
    fn optimal_t_tables_reach_bayes_accuracy() {
        let posts = array![[0.7, 0.2, 0.1], [0.1, 0.5, 0.4], [0.3, 0.3, 0.4]];
        let labels = vec![0, 1, 2];
        for div in Divergence::ALL {
            let t = posts.mapv(|p| div.optimal_t_from_posterior(p).unwrap());
            let r = evaluate_t(div, t.view(), &labels, &Correction::None).unwrap();
            assert_eq!(r.accuracy, 1.0);
        }
    }

    #[test]
    fn posterior_correction_at_evaluation() {
        // noisy posterior (0.43, 0.57) from clean (0.55, 0.45) with e = (0.1, 0.3)
        let noisy = array![[0.43, 0.57]];
        let t = noisy.mapv(|p| Divergence::Kl.optimal_t_from_posterior(p).unwrap());
        let none = evaluate_t(Divergence::Kl, t.view(), &[0], &Correction::None).unwrap();
        assert_eq!(none.accuracy, 0.0);
        let noise = NoiseModel::UniformOffDiagonal { e: vec![0.1, 0.3] };
        let fixed = evaluate_t(
            Divergence::Kl,
            t.view(),
            &[0],
            &Correction::Posterior { noise },
        )
        .unwrap();
        assert_eq!(fixed.accuracy, 1.0);
    }

    #[test]
    fn divergence_head_mismatch_is_an_error() {
        let (ds, _) = make_synthetic(2, 10, 2, 3.0, 5).unwrap();
        let m = NetworkModel::init(mlp(2, 2, OutputHead::RawT(Divergence::Gan)), 1).unwrap();
        let r = train(
            m,
            &ds,
            None,
            &ObjectiveConfig::plain(Divergence::Sl),
            &TrainConfig::default(),
        );
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn simplex_posterior_passthrough() {
        let d = array![[0.2, 0.8]];
        let p = posterior_from_outputs(OutputHead::SimplexD, Divergence::Gan, d.view()).unwrap();
        assert_eq!(p.values, d);
    }
}
