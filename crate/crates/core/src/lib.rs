//! Offline contextual-bandit policy learning with pessimistic lower
//! confidence bounds.
//!
//! * [`net`]: symmetric-initialized ReLU network, exact gradients, proximal SGD.
//! * [`conformal`]: bootstrap-ensemble conformal intervals with `β̂` width
//!   optimization and a sliding residual window.
//! * [`neural_lcb`]: the neural LCB training loop with a diagonal confidence
//!   matrix and a uniform policy mixture.
//! * [`lin_lcb`]: ridge LCB and its convex hybrid with the ensemble estimate.
//! * [`env`]: synthetic environments, context preprocessing, logged datasets
//!   and CSV I/O.
//! * [`eval`]: sub-optimality and coverage metrics plus the experiment runner.

pub mod conformal;
pub mod env;
pub mod error;
pub mod eval;
pub mod lin_lcb;
pub mod net;
pub mod neural_lcb;
pub mod persist;
pub mod predictor;
pub mod rng;

pub use error::{Error, Result};
