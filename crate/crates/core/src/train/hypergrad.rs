//! Total gradient of w -> L_upper(w, theta*(w)) through the lower-level
//! minimizer, via the implicit function theorem. This is a verification
//! oracle for the alternating loop, not part of it.
//!
//! With the regularized stationarity (Q(w) + g I) theta* + c(w) = 0, the
//! correction solves (Q + g I) v = dL/dtheta and the total gradient is
//!
//!   grad = dL/dw (theta fixed)  -  grad_w [ v' (Q(w) theta* + c(w)) ],
//!
//! both terms evaluated by the same reverse pass with different adjoint
//! seeds (see `PinnLoss::with_correction`).

use super::{Head, PinnLoss, TrainConfig};
use crate::diff::{param_gradient, NetworkParams};
use crate::error::{IfefError, Result};
use crate::features::FeatureBasis;
use crate::pde::{build_design, CollocationSet, PdeProblem};
use crate::qp::{assemble_from_design, factorize, solve_regularized, Theta};
use ndarray::Array1;

/// The hypergradient at `params`, plus the inner solution theta*(w) for
/// inspection.
pub fn hypergradient_ift(
    params: &NetworkParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    config: &TrainConfig,
) -> Result<(Vec<f64>, Theta)> {
    if !problem.interior.is_linear() {
        return Err(IfefError::config(
            "the implicit-function hypergradient needs a linear interior operator",
        ));
    }
    let hidden = params.without_readout();
    let extension = config.build_extension(hidden.hidden_dim())?;
    let basis = FeatureBasis::new(hidden.clone(), extension.clone())?;

    let design = build_design(problem, &basis, colloc)?;
    let sys = assemble_from_design(&design, config.lambda_ll)?;
    let theta = solve_regularized(&sys, config.gamma)?;

    // dL/dtheta with the upper physics weight.
    let lambda_up = config.effective_lambda_upper();
    let ru = design.b_u.dot(&theta.0) - &design.g_u;
    let rf = design.r_f.dot(&theta.0) - &design.f_f;
    let dl_dtheta: Array1<f64> = design.b_u.t().dot(&ru) * (2.0 / design.b_u.nrows() as f64)
        + design.r_f.t().dot(&rf) * (2.0 * lambda_up / design.r_f.nrows() as f64);

    let factor = factorize(&sys, config.gamma)?;
    let v = factor.solve(&dl_dtheta);

    let loss = PinnLoss::new(
        problem,
        colloc,
        lambda_up,
        Head::Basis { theta: &theta.0, extension: &extension },
    )?
    .with_correction(&v, config.lambda_ll);
    let (_, grad) = param_gradient(&hidden, &loss)?;
    Ok((grad.to_flat(), theta))
}

/// The partial gradient dL/dw at theta fixed (no IFT correction); exposed so
/// tests can check the envelope property at gamma = 0.
pub fn partial_upper_gradient(
    params: &NetworkParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    config: &TrainConfig,
    theta: &Theta,
) -> Result<Vec<f64>> {
    let hidden = params.without_readout();
    let extension = config.build_extension(hidden.hidden_dim())?;
    let loss = PinnLoss::new(
        problem,
        colloc,
        config.effective_lambda_upper(),
        Head::Basis { theta: &theta.0, extension: &extension },
    )?;
    let (_, grad) = param_gradient(&hidden, &loss)?;
    Ok(grad.to_flat())
}

/// Value of the composed map w -> L_upper(w, theta*(w)); the FD oracle
/// differentiates this directly.
pub fn composed_upper_loss(
    params: &NetworkParams,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    config: &TrainConfig,
) -> Result<f64> {
    let hidden = params.without_readout();
    let extension = config.build_extension(hidden.hidden_dim())?;
    let basis = FeatureBasis::new(hidden, extension)?;
    let design = build_design(problem, &basis, colloc)?;
    let sys = assemble_from_design(&design, config.lambda_ll)?;
    let theta = solve_regularized(&sys, config.gamma)?;

    let lambda_up = config.effective_lambda_upper();
    let ru = design.b_u.dot(&theta.0) - &design.g_u;
    let rf = design.r_f.dot(&theta.0) - &design.f_f;
    Ok(ru.dot(&ru) / design.b_u.nrows() as f64
        + lambda_up * rf.dot(&rf) / design.r_f.nrows() as f64)
}
