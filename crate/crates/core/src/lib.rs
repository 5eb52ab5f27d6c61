//! A continual-learning laboratory built on a from-scratch dense network.
//!
//! The pieces:
//!
//! - [`net`]: dense feed-forward network, exact backpropagation, plain SGD.
//! - [`bregman`]: Bregman divergences for the potentials the objectives use.
//! - [`fisher`]: diagonal empirical Fisher estimation, damping, inversion.
//! - [`methods`]: the composed objective and its presets (finetune, ER,
//!   DER++, oEWC, CPR, joint), reservoir replay buffer, consolidation, and
//!   the damped natural-gradient update.
//! - [`refresh`]: the unlearn-relearn plug-in wrapping any preset.
//! - [`theory`]: finite-difference utilities and the numerical consistency
//!   check between the refresh update and a preconditioned gradient-norm
//!   penalty.
//! - [`harness`]: task streams, the training loop, ACC/BWT metrics,
//!   configuration and persistence.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); runs and the
//! CLI use the `f64` aliases below.

pub mod bregman;
pub mod error;
pub mod fisher;
pub mod harness;
pub mod matrix;
pub mod methods;
pub mod net;
pub mod refresh;
pub mod rng;
pub mod scalar;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for runs and the CLI.
pub type DefaultScalar = f64;

pub type Matrix64 = matrix::Matrix<f64>;
pub type ParamVector64 = net::ParamVector<f64>;
pub type Batch64 = net::Batch<f64>;
pub type DiagFisher64 = fisher::DiagFisher<f64>;
pub type Potential64 = bregman::Potential<f64>;
pub type ReplayBuffer64 = methods::ReplayBuffer<f64>;
pub type ObjectiveConfig64 = methods::ObjectiveConfig<f64>;
pub type RefreshConfig64 = refresh::RefreshConfig<f64>;
