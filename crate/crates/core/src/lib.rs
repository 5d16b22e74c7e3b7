//! f-divergence posterior maximization for classification with noisy labels.
//!
//! A classifier outputs one value `T(x, i)` per class and is trained to
//! maximize `T(x, y) - sum_i f*(T(x, i))`; at the optimum `(f*)'(T)` is the
//! class posterior. Uniform off-diagonal label noise adds a bias term that
//! can be removed from the objective or from the posterior estimate.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dataset;
pub mod divergence;
pub mod error;
pub mod experiment;
pub mod joint;
pub mod model;
pub mod noise;
pub mod objective;
pub mod posterior;

pub use analysis::{verify_theorems, TheoremReport};
pub use dataset::{
    load_csv, make_synthetic, read_labeled_csv, GaussianMixture, LabeledDataset, Provenance, Split,
};
pub use divergence::{brute_force_conjugate, ConjugateGrid, Divergence, Interval};
pub use error::{Error, Result};
pub use experiment::{report, run_experiment, ExperimentConfig, ReportFormat, ResultRecord};
pub use joint::DiscreteJoint;
pub use model::{
    evaluate, train, Activation, EvalResult, MlpSpec, NetworkModel, OutputHead, TrainConfig,
    TrainTrace,
};
pub use noise::{corrupt, Fixture, NoiseModel, NoiseParams, TransitionMatrix};
pub use objective::{Correction, ObjectiveConfig};
pub use posterior::{estimate_posterior, posterior_correct, predict, PosteriorMatrix};
