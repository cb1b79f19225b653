//! Numerical laboratory for consistent restoration estimators on 2D toy problems.
//!
//! The toy problem: a point `X = (x1, x2)` is drawn from a known 2D distribution,
//! only `Y = x1` is observed, and an estimator must produce `X̂` with `X̂.x1 == Y`
//! exactly (perfect consistency). The crate provides
//!
//! * the toy distributions and the exact disk posterior ([`distributions`]),
//! * closed-form consistent estimators ([`estimators`]),
//! * a small ReLU MLP with hand-written reverse mode, R1 double-backward and Adam ([`nn`]),
//! * exact W2, k-NN precision/recall and friends ([`metrics`]),
//! * adversarial inner maximizations ([`adversarial`]),
//! * a toy GAN trainer with an adversarial-robustness regularizer ([`gan`]).
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix the scalar to `f64`, which is what the experiments use.

pub mod adversarial;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Point = distributions::Point2<f64>;
pub type Samples = distributions::SampleSet<f64>;
pub type Distribution = distributions::ToyDistribution<f64>;
pub type Estimator = estimators::Estimator<f64>;
pub type Mlp = nn::MlpParams<f64>;
pub type Adam = nn::AdamState<f64>;
pub type Attack = adversarial::AttackConfig<f64>;
pub type Report = metrics::MetricsReport;
pub type TrainConfig = gan::TrainConfig<f64>;
pub type TrainedPair = gan::TrainedPair<f64>;
