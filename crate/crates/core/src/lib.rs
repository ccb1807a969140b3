//! Dual-domain sparse-view CT reconstruction.
//!
//! The image `x` and the full-view sinogram `z` are estimated jointly by minimizing
//!
//! ```text
//! 1/2 |A x - z|^2 + lambda/2 |P0 z - s|^2 + |g_R(x)|_{2,1} + |g_Q(z)|_{2,1}
//! ```
//!
//! where `A` is a ray-driven projector, `P0` keeps the measured views `s`, and `g_R`, `g_Q` are
//! convolutional feature maps. The solver smooths the group norms, takes fast candidate steps
//! when they pass an energy descent test, and otherwise falls back to a backtracking block
//! descent, shrinking the smoothing factor as the gradient vanishes.

pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod regularizer;
pub mod simdata;
pub mod solver;
pub mod tomo;

pub use error::{Error, Result};
pub use objective::{DualState, ProblemSpec};
pub use solver::{IterateLog, SolverParams};
pub use tomo::{GridSpec, Image, Projector, ScanGeometry, Sinogram, ViewMask};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
