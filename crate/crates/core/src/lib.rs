//! Adaptive finite element solver for semilinear elliptic problems driven by
//! a residual estimator and an adaptively damped Newton iteration.

pub mod driver;
pub mod error;
pub mod estimator;
pub mod fespace;
pub mod linsolve;
pub mod marking;
pub mod mesh;
pub mod newton;
pub mod output;
pub mod poly;
pub mod problem;
pub mod rates;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};
