//! Multilayer perceptron with an f-divergence output head, trained by
//! mini-batch SGD with momentum and a cosine learning-rate schedule.

mod network;
mod train;

pub use network::{
    Activation, Gradients, Layer, MlpSpec, ModelFile, NetworkModel, OutputHead,
    MODEL_FORMAT_VERSION, SIMPLEX_FLOOR,
};
pub use train::{
    batch_gradient, evaluate, evaluate_t, posterior_from_outputs, train, CosineSchedule,
    EpochStats, EvalResult, SgdMomentum, TrainConfig, TrainTrace,
};
