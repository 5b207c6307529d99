//! Learned (accelerated) mirror descent: a small reverse-mode autodiff
//! engine, mirror potentials including input-convex networks, TV
//! reconstruction problems, the iteration schemes, unrolled training and
//! the experiment harness.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod mirror;
pub mod optim;
pub mod problems;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type Icnn = mirror::Icnn<f64>;
pub type MirrorMap = mirror::MirrorMap<f64>;
pub type TvObjective = problems::TvObjective<f64>;
pub type LeastSquares = problems::LeastSquares<f64>;
pub type Sample = problems::Sample<f64>;
pub type StepSchedule = optim::StepSchedule<f64>;
pub type IterateTrace = optim::IterateTrace<f64>;
pub type Checkpoint = train::Checkpoint<f64>;
pub type TrainOutcome = train::TrainOutcome<f64>;
