//! Physics-informed network training with a Fourier-extended readout basis.
//!
//! The crate splits the classical PINN objective into two stages: hidden tanh
//! layers supply a basis, random Fourier features extend it with
//! high-frequency components, and the readout coefficients are obtained by a
//! convex regression whenever the differential operators are linear. An
//! alternating loop refines the basis with first-order steps while the
//! regression stage is re-solved in closed form each epoch.
//!
//! Modules follow the pipeline: [`diff`] (jets and parameter gradients),
//! [`features`] (basis extension), [`pde`] (benchmark problems, samplers and
//! design rows), [`qp`] (quadratic assembly and the regularized solve),
//! [`train`] (pre-training, the alternating loop, hypergradient oracle),
//! [`eval`] (relative L2 and spectrum analysis), and [`selfcheck`] (fast
//! runtime oracle suite).

pub mod diff;
pub mod error;
pub mod eval;
pub mod fd;
pub mod features;
pub mod linalg;
pub mod opt;
pub mod pde;
pub mod qp;
pub mod rng;
pub mod selfcheck;
pub mod train;

pub use error::{IfefError, Result};

/// Version string recorded in run manifests.
pub const SUITE_VERSION: &str = env!("CARGO_PKG_VERSION");
