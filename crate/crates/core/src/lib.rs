//! Conservative Q-learning with interchangeable MLP and Kolmogorov–Arnold
//! network backbones.
//!
//! Everything runs on dense `f64` matrices with hand-derived gradients; there
//! is no autodiff framework underneath. The crate is organized bottom-up:
//!
//! - [`matrix`], [`rng`], [`adam`]: numeric plumbing
//! - [`bspline`]: B-spline bases for the KAN edge functions
//! - [`nn`]: Linear and KAN layers, gradient tape, checkpoints
//! - [`policy`]: the ten actor/critic configurations and the tanh-Gaussian policy
//! - [`cql`]: conservative critic loss, actor loss, temperatures, trainer
//! - [`env`], [`dataset`]: synthetic control tasks and offline datasets
//! - [`eval`]: rollouts, normalized scores, parameter and timing tables

pub mod adam;
pub mod bspline;
pub mod cql;
pub mod dataset;
pub mod env;
mod error;
pub mod eval;
pub mod matrix;
pub mod nn;
pub mod policy;
pub mod rng;

pub use adam::{AdamState, Optimizer};
pub use bspline::SplineGrid;
pub use cql::{CqlHyperparams, EpochMetrics, PenaltyMode, StepReport, TrainState};
pub use dataset::{Batch, Dataset, Tier};
pub use env::{EnvKind, EnvSpec};
pub use error::{Error, Result};
pub use eval::{BenchReport, EvalReport};
pub use matrix::Matrix;
pub use policy::{ActorNet, Backbone, CriticNet, NetworkConfig};
pub use rng::Rng;
