//! Benchmark PDE definitions, collocation samplers, and the translation of
//! points into design-matrix rows.

mod problems;
mod rows;
mod sampling;
pub mod burgers_ref;

pub use problems::{
    make_burgers, make_convection, make_convection_diffusion, make_helmholtz,
    make_multiscale_convection,
};
pub use rows::{
    apply_linear_jet, boundary_row, build_burgers_design, build_design, burgers_residual_jet,
    residual_row, BurgersDesign, DesignMatrices,
};
pub use sampling::{sample_lhs, sample_uniform, GridSpec};

use crate::diff::Jet2;
use crate::error::{IfefError, Result};

pub type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type JetFn = Box<dyn Fn(&[f64]) -> Jet2 + Send + Sync>;

/// Derivative selector restricted to what the suite needs: value, first
/// derivative along one axis, second derivative along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Deriv {
    Value,
    First(usize),
    Second(usize),
}

/// Constant-coefficient linear differential operator.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct LinearOperatorSpec {
    pub terms: Vec<(Deriv, f64)>,
}

impl LinearOperatorSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(IfefError::config("operator needs at least one term"));
        }
        for (d, _) in &self.terms {
            let axis = match d {
                Deriv::Value => continue,
                Deriv::First(i) | Deriv::Second(i) => *i,
            };
            if axis >= dim {
                return Err(IfefError::config(format!(
                    "operator term references axis {axis} in a {dim}-dimensional problem"
                )));
            }
        }
        Ok(())
    }

    pub fn max_order(&self) -> u8 {
        self.terms
            .iter()
            .map(|(d, _)| match d {
                Deriv::Value => 0,
                Deriv::First(_) => 1,
                Deriv::Second(_) => 2,
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub enum InteriorOp {
    Linear(LinearOperatorSpec),
    /// u_t + u u_x - nu u_xx with axes (t, x).
    Burgers { nu: f64 },
}

impl InteriorOp {
    pub fn max_order(&self) -> u8 {
        match self {
            InteriorOp::Linear(op) => op.max_order(),
            InteriorOp::Burgers { .. } => 2,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, InteriorOp::Linear(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BcKind {
    Dirichlet,
    Initial,
}

/// Symbolic boundary descriptor; samplers turn these into tagged point sets.
pub enum BoundaryDescriptor {
    /// One face of the axis-aligned box: `axis = lo` or `axis = hi`, with a
    /// pointwise target.
    Face { axis: usize, at_hi: bool, kind: BcKind, target: ScalarFn },
    /// Matching points on the lo/hi faces of `axis`; order 0 equates values,
    /// order 1 equates the derivative along `axis`. Target is zero.
    PeriodicPair { axis: usize, order: u8 },
}

impl BoundaryDescriptor {
    pub fn max_order(&self) -> u8 {
        match self {
            BoundaryDescriptor::Face { .. } => 0,
            BoundaryDescriptor::PeriodicPair { order, .. } => *order,
        }
    }
}

/// One benchmark problem: domain, operators, boundary data, source, and the
/// closed-form solution when one exists (with analytic jets for the suite's
/// self-consistency checks).
pub struct PdeProblem {
    pub name: String,
    pub dim: usize,
    pub domain: Vec<(f64, f64)>,
    pub interior: InteriorOp,
    pub boundary: Vec<BoundaryDescriptor>,
    pub source: ScalarFn,
    pub exact: Option<ScalarFn>,
    pub exact_jet: Option<JetFn>,
}

impl PdeProblem {
    /// Highest derivative order any row of this problem needs.
    pub fn required_order(&self) -> u8 {
        let bc = self.boundary.iter().map(|b| b.max_order()).max().unwrap_or(0);
        self.interior.max_order().max(bc)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim
            && x.iter()
                .zip(&self.domain)
                .all(|(v, (lo, hi))| *v >= *lo - 1e-12 && *v <= *hi + 1e-12)
    }
}

/// A boundary sample carrying its condition tag, ready to become one row.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum BoundarySample {
    Point { x: Vec<f64>, target: f64, kind: BcKind },
    Pair { a: Vec<f64>, b: Vec<f64>, axis: usize, order: u8 },
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CollocationSet {
    pub boundary: Vec<BoundarySample>,
    pub interior: Vec<Vec<f64>>,
    pub seed: u64,
}

impl CollocationSet {
    pub fn n_u(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_f(&self) -> usize {
        self.interior.len()
    }
}
