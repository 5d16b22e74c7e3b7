use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::Divergence;
use crate::error::{Error, Result};
use crate::objective::{sample_value_and_grad, softmax_head_backward, ObjectiveConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// How the last linear layer's outputs `v` become head outputs.
///
/// `RawT` maps `v` into the divergence's conjugate domain:
/// identity for KL, `-softplus(-v)` for GAN, `-1 / (1 + softplus(v))` for SL.
/// `SimplexD` applies a softmax; the objective then sees `T = f'(D)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "divergence", rename_all = "snake_case")]
pub enum OutputHead {
    RawT(Divergence),
    SimplexD,
}

/// Smallest softmax output; keeps `f'(D)` finite.
pub const SIMPLEX_FLOOR: f64 = 1e-300;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn link(div: Divergence, v: f64) -> f64 {
    match div {
        Divergence::Kl => v,
        Divergence::Gan => -softplus(-v),
        Divergence::Sl => -1.0 / (1.0 + softplus(v)),
    }
}

fn link_derivative(div: Divergence, v: f64) -> f64 {
    match div {
        Divergence::Kl => 1.0,
        Divergence::Gan => sigmoid(-v),
        Divergence::Sl => {
            let s = 1.0 + softplus(v);
            sigmoid(v) / (s * s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width `K`.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub head: OutputHead,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::param(
                "layer_sizes needs at least input and output widths",
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::param("layer widths must be positive"));
        }
        if self.outputs() < 2 {
            return Err(Error::param("output width must be at least 2 classes"));
        }
        Ok(())
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
    pub seed: u64,
}

/// Per-layer parameter gradients, same shapes as [`NetworkModel::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

struct ForwardCache {
    /// Inputs to each layer (`activations[0]` is the batch).
    activations: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
    /// Final linear outputs.
    logits: Array2<f64>,
    /// Head outputs (T for `RawT`, D for `SimplexD`).
    outputs: Array2<f64>,
}

impl NetworkModel {
    /// Fan-in scaled uniform weights in `(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.random_range(-bound..bound)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { spec, layers, seed })
    }

    pub fn head(&self) -> OutputHead {
        self.spec.head
    }

    pub fn params_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        let n: usize = self
            .layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if params.len() != n {
            return Err(Error::mismatch("parameter vector", n, params.len()));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights
                .iter_mut()
                .for_each(|w| *w = it.next().expect("length checked"));
            l.bias
                .iter_mut()
                .for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Head outputs for a batch `N x D`: T values for `RawT`, simplex rows
    /// for `SimplexD`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.outputs)
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        if x.ncols() != self.spec.inputs() {
            return Err(Error::mismatch(
                "network input width",
                self.spec.inputs(),
                x.ncols(),
            ));
        }
        let act = self.spec.activation;
        let mut activations = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        let mut logits = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = activations[i].dot(&layer.weights.t()) + &layer.bias;
            if i == last {
                logits = Some(z);
            } else {
                activations.push(z.mapv(|v| act.apply(v)));
                pre.push(z);
            }
        }
        let logits = logits.expect("at least one layer");
        let outputs = match self.spec.head {
            OutputHead::RawT(div) => logits.mapv(|v| link(div, v)),
            OutputHead::SimplexD => {
                let mut d = logits.clone();
                for mut row in d.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - max).exp());
                    let s = row.sum();
                    row.mapv_inplace(|v| (v / s).max(SIMPLEX_FLOOR));
                }
                d
            }
        };
        Ok(ForwardCache {
            activations,
            pre,
            logits,
            outputs,
        })
    }

    /// Network outputs as objective inputs `T`.
    pub fn t_outputs(&self, x: ArrayView2<f64>, div: Divergence) -> Result<Array2<f64>> {
        let out = self.forward(x)?;
        self.outputs_to_t(out, div)
    }

    fn outputs_to_t(&self, outputs: Array2<f64>, div: Divergence) -> Result<Array2<f64>> {
        match self.spec.head {
            OutputHead::RawT(_) => Ok(outputs),
            OutputHead::SimplexD => {
                let mut t = outputs;
                for v in t.iter_mut() {
                    *v = div.generator_prime(*v)?;
                }
                Ok(t)
            }
        }
    }

    /// Checks that a `RawT` head was built for `div`.
    pub fn check_objective(&self, objective: &ObjectiveConfig) -> Result<()> {
        if let OutputHead::RawT(head_div) = self.spec.head {
            if head_div != objective.divergence {
                return Err(Error::param(format!(
                    "network head links into the {head_div} conjugate domain \
                     but the objective uses {}",
                    objective.divergence
                )));
            }
        }
        Ok(())
    }

    /// Mean objective over the batch and its gradient with respect to every
    /// parameter (ascent direction). `rates` selects the bias-corrected objective.
    pub fn objective_gradient(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        div: Divergence,
        rates: Option<&[f64]>,
    ) -> Result<(f64, Gradients)> {
        let n = x.nrows();
        if labels.len() != n {
            return Err(Error::mismatch("batch labels", n, labels.len()));
        }
        if n == 0 {
            return Err(Error::param("empty batch"));
        }
        if let OutputHead::RawT(head_div) = self.spec.head {
            if head_div != div {
                return Err(Error::param(format!(
                    "head built for {head_div}, objective uses {div}"
                )));
            }
        }
        let cache = self.forward_cached(x)?;
        let t = self.outputs_to_t(cache.outputs.clone(), div)?;
        let k = t.ncols();

        // dJ/dv for every sample, scaled by 1/n for the batch mean
        let scale = 1.0 / n as f64;
        let mut value = 0.0;
        let mut delta = Array2::zeros((n, k));
        for (i, &y) in labels.iter().enumerate() {
            let (v, g) = sample_value_and_grad(div, t.row(i), y, rates)?;
            value += v;
            let dv = match self.spec.head {
                OutputHead::RawT(_) => {
                    let mut dv = g;
                    for (d, &z) in dv.iter_mut().zip(cache.logits.row(i)) {
                        *d *= link_derivative(div, z);
                    }
                    dv
                }
                OutputHead::SimplexD => softmax_head_backward(div, cache.outputs.row(i), g.view()),
            };
            delta.row_mut(i).assign(&(dv * scale));
        }

        let act = self.spec.activation;
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for li in (0..self.layers.len()).rev() {
            let input = &cache.activations[li];
            grads.push(Layer {
                weights: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            if li > 0 {
                let mut back = delta.dot(&self.layers[li].weights);
                let z = &cache.pre[li - 1];
                let a = &cache.activations[li];
                ndarray::Zip::from(&mut back)
                    .and(z)
                    .and(a)
                    .for_each(|b, &zv, &av| *b *= act.derivative(zv, av));
                delta = back;
            }
        }
        grads.reverse();
        Ok((value * scale, Gradients { layers: grads }))
    }

    pub fn save_json(
        &self,
        path: impl AsRef<Path>,
        objective: Option<&ObjectiveConfig>,
    ) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
            objective: objective.cloned(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<ModelFile> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model file version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                file.format_version
            )));
        }
        file.model.spec.validate()?;
        Ok(file)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: NetworkModel,
    pub objective: Option<ObjectiveConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(sizes: &[usize], head: OutputHead) -> MlpSpec {
        MlpSpec {
            layer_sizes: sizes.to_vec(),
            activation: Activation::Tanh,
            head,
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let s = spec(&[5, 7, 3], OutputHead::SimplexD);
        let a = NetworkModel::init(s.clone(), 4).unwrap();
        let b = NetworkModel::init(s.clone(), 4).unwrap();
        let c = NetworkModel::init(s, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for l in &a.layers {
            let bound = (6.0 / l.weights.ncols() as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_hidden_layers_is_linear() {
        let m = NetworkModel::init(spec(&[3, 2], OutputHead::RawT(Divergence::Kl)), 1).unwrap();
        assert_eq!(m.layers.len(), 1);
        let x = array![[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]];
        let out = m.forward(x.view()).unwrap();
        let expected = x.dot(&m.layers[0].weights.t());
        assert_eq!(out, expected);
    }

    #[test]
    fn heads_respect_domains() {
        let x = Array2::from_shape_fn((20, 4), |(i, j)| (i as f64 - 10.0) * (j as f64 + 1.0));
        let d = NetworkModel::init(spec(&[4, 6, 3], OutputHead::SimplexD), 2).unwrap();
        for row in d.forward(x.view()).unwrap().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0));
        }
        for div in Divergence::ALL {
            let m = NetworkModel::init(spec(&[4, 6, 3], OutputHead::RawT(div)), 2).unwrap();
            let out = m.forward(x.view()).unwrap();
            assert!(
                out.iter()
                    .all(|&t| t.is_finite() && div.conj_domain().contains(t)),
                "{div}"
            );
        }
    }

    #[test]
    fn links_are_monotone_and_match_derivatives() {
        for div in Divergence::ALL {
            let mut prev = f64::NEG_INFINITY;
            for i in -400..=400 {
                let v = i as f64 * 0.05;
                let t = link(div, v);
                assert!(t > prev || div == Divergence::Kl && t >= prev);
                prev = t;
                let h = 1e-6;
                let fd = (link(div, v + h) - link(div, v - h)) / (2.0 * h);
                assert!((fd - link_derivative(div, v)).abs() < 1e-7, "{div} at {v}");
            }
        }
    }

    #[test]
    fn input_width_is_checked() {
        let m = NetworkModel::init(spec(&[3, 2], OutputHead::SimplexD), 0).unwrap();
        assert!(m.forward(Array2::zeros((2, 4)).view()).is_err());
        assert!(NetworkModel::init(spec(&[3], OutputHead::SimplexD), 0).is_err());
        assert!(NetworkModel::init(spec(&[3, 1], OutputHead::SimplexD), 0).is_err());
    }

    #[test]
    fn mismatched_head_rejected() {
        let m = NetworkModel::init(spec(&[2, 2], OutputHead::RawT(Divergence::Gan)), 0).unwrap();
        assert!(m
            .check_objective(&ObjectiveConfig::plain(Divergence::Kl))
            .is_err());
        assert!(m
            .objective_gradient(array![[0.1, 0.2]].view(), &[0], Divergence::Kl, None)
            .is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = NetworkModel::init(spec(&[3, 4, 2], OutputHead::RawT(Divergence::Sl)), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let obj = ObjectiveConfig::plain(Divergence::Sl);
        m.save_json(&path, Some(&obj)).unwrap();
        let back = NetworkModel::load_json(&path).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.objective, Some(obj));
    }
}
