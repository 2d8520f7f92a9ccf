//! Discrete-time random walks on finite models of metric measure spaces.
//!
//! The crate builds windowed spaces, ε-nets and symmetric Markov kernels, and
//! provides estimators for volume doubling, Poincaré-type inequalities, heat
//! kernel bounds and Harnack inequalities. Every estimator reports observed
//! constants together with the truncation flags of the window it ran on.

pub mod error;
pub mod harnack;
pub mod ineq;
pub mod kernel;
pub mod linalg;
pub mod net;
pub mod numeric;
pub mod space;

pub use error::{Error, Result};
pub use kernel::{DirichletKernel, Kernel};
pub use space::{GraphData, Space, SpaceKind, SpaceSpec};
