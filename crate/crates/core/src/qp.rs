//! The lower-level problem: assembling the quadratic loss in the readout
//! coefficients and solving it — in closed form for linear operators, by
//! first-order iteration for the Burgers nonlinearity.
//!
//! With boundary rows B_u (targets G_u) and residual rows R_f (sources F_f),
//! the sampled loss (1/N_u)|B_u th - G_u|^2 + (l/N_f)|R_f th - F_f|^2 equals
//! (1/2) th' Q th + c' th + b with
//!
//!   Q = (2/N_u) B_u'B_u + (2 l/N_f) R_f'R_f,
//!   c = -(2/N_u) B_u'G_u - (2 l/N_f) R_f'F_f,
//!   b = (1/N_u) G_u'G_u + (l/N_f) F_f'F_f,
//!
//! and the Tikhonov-regularized minimizer is th* = -(Q + g I)^{-1} c.

use crate::error::{IfefError, Result};
use crate::linalg;
use crate::opt::Adam;
use crate::pde::{BurgersDesign, DesignMatrices};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Readout coefficients over the (possibly extended) basis.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Theta(pub Array1<f64>);

impl Theta {
    pub fn zeros(dim: usize) -> Self {
        Theta(Array1::zeros(dim))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// The assembled quadratic lower-level system.
#[derive(Debug, Clone)]
pub struct QpSystem {
    pub q: Array2<f64>,
    pub c: Array1<f64>,
    pub b: f64,
    pub n_u: usize,
    pub n_f: usize,
    pub lambda_ll: f64,
}

impl QpSystem {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// (1/2) th' Q th + c' th + b.
    pub fn quadratic_value(&self, theta: &Theta) -> f64 {
        0.5 * theta.0.dot(&self.q.dot(&theta.0)) + self.c.dot(&theta.0) + self.b
    }

    /// The Tikhonov objective actually minimized by the solver.
    pub fn regularized_value(&self, theta: &Theta, gamma: f64) -> f64 {
        self.quadratic_value(theta) + 0.5 * gamma * theta.0.dot(&theta.0)
    }
}

/// Assemble the quadratic system from design matrices. Q is symmetrized to
/// machine precision after the Gram products.
pub fn assemble(
    b_u: ArrayView2<f64>,
    g_u: ArrayView1<f64>,
    r_f: ArrayView2<f64>,
    f_f: ArrayView1<f64>,
    lambda_ll: f64,
) -> Result<QpSystem> {
    let n_u = b_u.nrows();
    let n_f = r_f.nrows();
    if n_u == 0 || n_f == 0 {
        return Err(IfefError::config("assemble needs at least one row of each kind"));
    }
    if b_u.ncols() != r_f.ncols() {
        return Err(IfefError::config(format!(
            "boundary rows have {} columns, residual rows {}",
            b_u.ncols(),
            r_f.ncols()
        )));
    }
    if g_u.len() != n_u || f_f.len() != n_f {
        return Err(IfefError::config("target lengths do not match row counts"));
    }
    if !(lambda_ll > 0.0) {
        return Err(IfefError::config(format!("lambda_ll must be positive, got {lambda_ll}")));
    }

    let wu = 2.0 / n_u as f64;
    let wf = 2.0 * lambda_ll / n_f as f64;

    let mut q = b_u.t().dot(&b_u) * wu;
    q += &(r_f.t().dot(&r_f) * wf);
    linalg::symmetrize(&mut q);

    let mut c = b_u.t().dot(&g_u) * (-wu);
    c += &(r_f.t().dot(&f_f) * (-wf));

    let b = g_u.dot(&g_u) / n_u as f64 + lambda_ll * f_f.dot(&f_f) / n_f as f64;

    Ok(QpSystem { q, c, b, n_u, n_f, lambda_ll })
}

pub fn assemble_from_design(design: &DesignMatrices, lambda_ll: f64) -> Result<QpSystem> {
    assemble(
        design.b_u.view(),
        design.g_u.view(),
        design.r_f.view(),
        design.f_f.view(),
        lambda_ll,
    )
}

/// Direct evaluation of the sampled loss — the independent route the
/// quadratic form is checked against.
pub fn direct_loss(design: &DesignMatrices, lambda_ll: f64, theta: &Theta) -> f64 {
    let ru = &design.b_u.dot(&theta.0) - &design.g_u;
    let rf = &design.r_f.dot(&theta.0) - &design.f_f;
    ru.dot(&ru) / design.b_u.nrows() as f64
        + lambda_ll * rf.dot(&rf) / design.r_f.nrows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankStatus {
    Ok,
    /// N_u + N_f < feature count: the regularizer is carrying the solve.
    Underdetermined,
}

/// Sampling-count guard: with fewer rows than features the Gram matrix is
/// rank-deficient, which is an error at gamma = 0 and a warning otherwise.
pub fn rank_guard(system: &QpSystem, gamma: f64) -> Result<RankStatus> {
    let rows = system.n_u + system.n_f;
    let cols = system.dim();
    if rows < cols {
        if gamma > 0.0 {
            Ok(RankStatus::Underdetermined)
        } else {
            Err(IfefError::config(format!(
                "underdetermined system: N_u + N_f = {rows} < {cols} features and gamma = 0"
            )))
        }
    } else {
        Ok(RankStatus::Ok)
    }
}

/// th* = -(Q + g I)^{-1} c via Cholesky. One retry with 10x the shift when
/// the factorization fails; the solution residual is checked afterwards.
pub fn solve_regularized(system: &QpSystem, gamma: f64) -> Result<Theta> {
    if gamma < 0.0 {
        return Err(IfefError::config(format!("gamma must be nonnegative, got {gamma}")));
    }
    let factor = match factor_shifted(&system.q, gamma) {
        Ok(f) => f,
        Err(IfefError::Singular { .. }) if gamma > 0.0 => factor_shifted(&system.q, 10.0 * gamma)?,
        Err(e) => return Err(e),
    };
    let theta = Theta(-factor.solve(&system.c));

    let mut residual = system.q.dot(&theta.0) + &system.c;
    if gamma > 0.0 {
        residual.scaled_add(gamma, &theta.0);
    }
    let rmax = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cmax = system.c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if rmax > 1e-8 * (1.0 + cmax) {
        return Err(IfefError::numeric(
            None,
            format!("solver residual {rmax:.3e} exceeds 1e-8 * (1 + |c| = {cmax:.3e})"),
        ));
    }
    Ok(theta)
}

fn factor_shifted(q: &Array2<f64>, gamma: f64) -> Result<linalg::CholeskyFactor> {
    if gamma == 0.0 {
        return linalg::cholesky(q.view());
    }
    let mut shifted = q.clone();
    for i in 0..shifted.nrows() {
        shifted[[i, i]] += gamma;
    }
    linalg::cholesky(shifted.view())
}

/// Cached factorization for repeated solves against the same system (the
/// hypergradient needs one extra solve).
pub fn factorize(system: &QpSystem, gamma: f64) -> Result<linalg::CholeskyFactor> {
    factor_shifted(&system.q, gamma)
}

/// Burgers lower loss at theta: boundary rows are linear, the interior
/// residual is u_t + u u_x - nu u_xx with every u-term a matvec.
pub fn burgers_lower_loss(design: &BurgersDesign, lambda_ll: f64, theta: &Theta) -> f64 {
    let ru = &design.b_u.dot(&theta.0) - &design.g_u;
    let r = burgers_residual(design, theta);
    ru.dot(&ru) / design.b_u.nrows() as f64 + lambda_ll * r.dot(&r) / design.val.nrows() as f64
}

fn burgers_residual(design: &BurgersDesign, theta: &Theta) -> Array1<f64> {
    let u = design.val.dot(&theta.0);
    let ut = design.d_t.dot(&theta.0);
    let ux = design.d_x.dot(&theta.0);
    let uxx = design.d_xx.dot(&theta.0);
    &ut + &(&u * &ux) - &(uxx * design.nu) - &design.f_f
}

/// Gradient of the Burgers lower loss.
pub fn burgers_lower_grad(design: &BurgersDesign, lambda_ll: f64, theta: &Theta) -> Array1<f64> {
    let n_u = design.b_u.nrows() as f64;
    let n_f = design.val.nrows() as f64;
    let ru = &design.b_u.dot(&theta.0) - &design.g_u;
    let mut grad = design.b_u.t().dot(&ru) * (2.0 / n_u);

    let u = design.val.dot(&theta.0);
    let ux = design.d_x.dot(&theta.0);
    let r = burgers_residual(design, theta);
    // dr/dth = d_t + diag(u_x) val + diag(u) d_x - nu d_xx.
    let w = 2.0 * lambda_ll / n_f;
    grad += &(design.d_t.t().dot(&r) * w);
    grad += &(design.val.t().dot(&(&r * &ux)) * w);
    grad += &(design.d_x.t().dot(&(&r * &u)) * w);
    grad += &(design.d_xx.t().dot(&r) * (-design.nu * w));
    grad
}

/// First-order (adaptive-moment) descent on the nonlinear lower loss.
/// Returns the best iterate seen together with the loss trace; errors out
/// when the trace blows past 10x the initial loss.
pub fn nonlinear_lower_solve(
    design: &BurgersDesign,
    lambda_ll: f64,
    theta0: &Theta,
    steps: usize,
    lr: f64,
) -> Result<(Theta, Vec<f64>)> {
    let initial = burgers_lower_loss(design, lambda_ll, theta0);
    let mut trace = vec![initial];
    if steps == 0 {
        return Ok((theta0.clone(), trace));
    }
    let mut theta = theta0.clone();
    let mut best = theta.clone();
    let mut best_loss = initial;
    let mut adam = Adam::new(theta.len(), lr);
    for _ in 0..steps {
        let grad = burgers_lower_grad(design, lambda_ll, &theta);
        adam.step(theta.0.as_slice_mut().unwrap(), grad.as_slice().unwrap());
        let loss = burgers_lower_loss(design, lambda_ll, &theta);
        if !loss.is_finite() || loss > 10.0 * initial.max(f64::MIN_POSITIVE) {
            trace.push(loss);
            return Err(IfefError::Divergence { initial, last: loss, trace });
        }
        trace.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = theta.clone();
        }
    }
    Ok((best, trace))
}
