//! Training: vanilla pre-training, the alternating bi-level loop, the
//! primal-dual weight variant, and the implicit-function-theorem
//! hypergradient oracle.

mod losses;
pub mod hypergrad;
pub mod manifest;

pub use losses::{Head, PinnLoss};

use crate::diff::{param_gradient, NetworkParams};
use crate::error::{IfefError, Result};
use crate::eval::GridEvaluator;
use crate::features::{sample_rff, Extension, FeatureBasis};
use crate::opt::{Adam, UpperOptimizer, UpperRule};
use crate::pde::{build_burgers_design, build_design, CollocationSet, PdeProblem};
use crate::qp::{
    assemble_from_design, burgers_lower_loss, nonlinear_lower_solve, rank_guard,
    solve_regularized, RankStatus, Theta,
};
use crate::rng::SeedPlan;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ifef,
    IfefPd,
    Vanilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionMode {
    Rff,
    None,
}

/// Every knob of one training run. Defaults follow the benchmark settings:
/// pre-training weight 0.01, Adam at 1e-3 upstairs, dual rate 1e-4, sigma 1.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub extension_mode: ExtensionMode,
    pub d: usize,
    pub sigma: f64,
    pub lambda_ll: f64,
    pub lambda_pretrain: f64,
    /// Physics weight of the upper loss; defaults to `lambda_ll`.
    pub lambda_upper: Option<f64>,
    pub gamma: f64,
    pub pretrain_epochs: usize,
    pub ifef_epochs: usize,
    pub upper_lr: f64,
    pub upper_rule: UpperRule,
    pub dual_lr: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nonlinear_steps: usize,
    pub nonlinear_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Ifef,
            extension_mode: ExtensionMode::Rff,
            d: 800,
            sigma: 1.0,
            lambda_ll: 1e-2,
            lambda_pretrain: 1e-2,
            lambda_upper: None,
            gamma: 1e-7,
            pretrain_epochs: 5000,
            ifef_epochs: 2000,
            upper_lr: 1e-3,
            upper_rule: UpperRule::Adam,
            dual_lr: 1e-4,
            lambda_min: 1e-8,
            lambda_max: 1e3,
            nonlinear_steps: 2000,
            nonlinear_lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ll > 0.0) {
            return Err(IfefError::config(format!(
                "lambda_ll must be positive, got {}",
                self.lambda_ll
            )));
        }
        if !(self.lambda_pretrain > 0.0) {
            return Err(IfefError::config("lambda_pretrain must be positive"));
        }
        if let Some(l) = self.lambda_upper {
            if !(l > 0.0) {
                return Err(IfefError::config("lambda_upper must be positive"));
            }
        }
        if self.gamma < 0.0 {
            return Err(IfefError::config("gamma must be nonnegative"));
        }
        if !(self.upper_lr > 0.0) || !(self.dual_lr > 0.0) || !(self.nonlinear_lr > 0.0) {
            return Err(IfefError::config("learning rates must be positive"));
        }
        if self.extension_mode == ExtensionMode::Rff && self.d == 0 {
            return Err(IfefError::config("d must be at least 1 in rff mode"));
        }
        if self.extension_mode == ExtensionMode::Rff && !(self.sigma > 0.0) {
            return Err(IfefError::config("sigma must be positive in rff mode"));
        }
        if !(self.lambda_min > 0.0) || self.lambda_max < self.lambda_min {
            return Err(IfefError::config("need 0 < lambda_min <= lambda_max"));
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedPlan {
        SeedPlan::from_master(self.seed)
    }

    pub fn effective_lambda_upper(&self) -> f64 {
        self.lambda_upper.unwrap_or(self.lambda_ll)
    }

    /// Build the basis extension for a hidden width `p` (the feature matrix
    /// is sampled once per run and held fixed).
    pub fn build_extension(&self, p: usize) -> Result<Extension> {
        match self.extension_mode {
            ExtensionMode::None => Ok(Extension::None),
            ExtensionMode::Rff => {
                Ok(Extension::Rff(sample_rff(self.d, p, self.sigma, self.seeds().rff)?))
            }
        }
    }
}

/// One metrics row. `lower_*` are the quadratic lower loss evaluated at the
/// fresh minimizer / the previous coefficients; `*_reg` add the Tikhonov
/// term actually minimized. `lambda` is the upper physics weight in force.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lower_loss: f64,
    pub lower_before: f64,
    pub lower_reg: f64,
    pub lower_reg_before: f64,
    pub upper_loss: f64,
    pub rel_l2: f64,
    pub lambda: f64,
    pub wall_ms: u64,
}

/// Multiplier ascent on the physics weight, clamped.
pub fn primal_dual_update(
    lambda_k: f64,
    physics_residual_mean: f64,
    dual_lr: f64,
    lambda_min: f64,
    lambda_max: f64,
) -> f64 {
    (lambda_k + dual_lr * physics_residual_mean).clamp(lambda_min, lambda_max)
}

/// Vanilla PINN pre-training: first-order steps on the sampled loss with the
/// readout head. Returns the trained parameters (readout included) and the
/// loss trace.
pub fn pretrain_vanilla(
    problem: &PdeProblem,
    params0: &NetworkParams,
    colloc: &CollocationSet,
    config: &TrainConfig,
) -> Result<(NetworkParams, Vec<f64>)> {
    if params0.readout.is_none() {
        return Err(IfefError::config("pre-training needs a readout row"));
    }
    let mut params = params0.clone();
    let mut trace = Vec::with_capacity(config.pretrain_epochs);
    if config.pretrain_epochs == 0 {
        return Ok((params, trace));
    }
    let mut adam = Adam::new(params.param_count(), config.upper_lr);
    for epoch in 0..config.pretrain_epochs {
        let readout = params.readout.clone().unwrap();
        let loss =
            PinnLoss::new(problem, colloc, config.lambda_pretrain, Head::Readout(&readout))?;
        let (value, grad) = param_gradient(&params, &loss).map_err(|e| match e {
            IfefError::Numeric { msg, .. } => IfefError::numeric(Some(epoch), msg),
            other => other,
        })?;
        if !value.is_finite() {
            return Err(IfefError::numeric(Some(epoch), "non-finite pre-training loss"));
        }
        trace.push(value);
        let gflat = grad.to_flat();
        let mut pflat = params.to_flat();
        adam.step(&mut pflat, &gflat);
        params = params.from_flat(&pflat)?;
    }
    Ok((params, trace))
}

/// One first-order step on the upper loss at fixed theta. Returns the new
/// parameters and the loss value before the step.
pub fn upper_step(
    params: &NetworkParams,
    theta: &Theta,
    problem: &PdeProblem,
    colloc: &CollocationSet,
    extension: &Extension,
    lambda_upper: f64,
    opt: &mut UpperOptimizer,
) -> Result<(NetworkParams, f64)> {
    let loss = PinnLoss::new(
        problem,
        colloc,
        lambda_upper,
        Head::Basis { theta: &theta.0, extension },
    )?;
    let (value, grad) = param_gradient(params, &loss)?;
    let gflat = grad.to_flat();
    if gflat.iter().any(|g| !g.is_finite()) {
        return Err(IfefError::numeric(None, "non-finite upper gradient"));
    }
    let mut pflat = params.to_flat();
    opt.step(&mut pflat, &gflat);
    Ok((params.from_flat(&pflat)?, value))
}

/// Result of an alternating run.
pub struct IfefOutcome {
    pub params: NetworkParams,
    pub theta: Theta,
    pub extension: Extension,
    pub records: Vec<EpochRecord>,
    pub rank_warning: bool,
    pub final_rel_l2: f64,
    pub final_lower: f64,
}

struct LowerSolveOutput {
    theta: Theta,
    lower_before: f64,
    lower_after: f64,
    reg_before: f64,
    reg_after: f64,
    mean_sq_residual: f64,
}

fn lower_solve(
    problem: &PdeProblem,
    basis: &FeatureBasis,
    colloc: &CollocationSet,
    config: &TrainConfig,
    theta_prev: &Theta,
    rank_warning: &mut bool,
) -> Result<LowerSolveOutput> {
    if problem.interior.is_linear() {
        let design = build_design(problem, basis, colloc)?;
        let sys = assemble_from_design(&design, config.lambda_ll)?;
        if rank_guard(&sys, config.gamma)? == RankStatus::Underdetermined {
            *rank_warning = true;
        }
        let theta = solve_regularized(&sys, config.gamma)?;
        let rf = design.r_f.dot(&theta.0) - &design.f_f;
        Ok(LowerSolveOutput {
            lower_before: sys.quadratic_value(theta_prev),
            lower_after: sys.quadratic_value(&theta),
            reg_before: sys.regularized_value(theta_prev, config.gamma),
            reg_after: sys.regularized_value(&theta, config.gamma),
            mean_sq_residual: rf.dot(&rf) / design.r_f.nrows() as f64,
            theta,
        })
    } else {
        let design = build_burgers_design(problem, basis, colloc)?;
        let before = burgers_lower_loss(&design, config.lambda_ll, theta_prev);
        let (theta, _trace) = nonlinear_lower_solve(
            &design,
            config.lambda_ll,
            theta_prev,
            config.nonlinear_steps,
            config.nonlinear_lr,
        )?;
        let after = burgers_lower_loss(&design, config.lambda_ll, &theta);
        let sq = |t: &Theta| 0.5 * config.gamma * t.0.dot(&t.0);
        let u = design.val.dot(&theta.0);
        let ux = design.d_x.dot(&theta.0);
        let ut = design.d_t.dot(&theta.0);
        let uxx = design.d_xx.dot(&theta.0);
        let r = &ut + &(&u * &ux) - &(uxx * design.nu) - &design.f_f;
        Ok(LowerSolveOutput {
            lower_before: before,
            lower_after: after,
            reg_before: before + sq(theta_prev),
            reg_after: after + sq(&theta),
            mean_sq_residual: r.dot(&r) / design.val.nrows() as f64,
            theta,
        })
    }
}

/// The alternating loop: rebuild the basis, solve the lower problem, take one
/// upper step; after the last epoch the coefficients are re-solved at the
/// final parameters. With `ifef_epochs = 0` this is the one-shot solve the
/// spectrum analysis uses.
pub fn ifef_train(
    problem: &PdeProblem,
    params0: &NetworkParams,
    colloc: &CollocationSet,
    config: &TrainConfig,
    evaluator: Option<&GridEvaluator>,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<IfefOutcome> {
    config.validate()?;
    let mut params = params0.without_readout();
    let extension = config.build_extension(params.hidden_dim())?;
    let feat_dim = extension.feature_dim(params.hidden_dim());
    let mut theta = Theta::zeros(feat_dim);
    let mut lambda_up = config.effective_lambda_upper();
    let mut opt = UpperOptimizer::new(config.upper_rule, params.param_count(), config.upper_lr);
    let mut rank_warning = false;
    let mut records = Vec::with_capacity(config.ifef_epochs);

    for epoch in 0..config.ifef_epochs {
        let t0 = Instant::now();
        let basis = FeatureBasis::new(params.clone(), extension.clone())?;
        let lower = lower_solve(problem, &basis, colloc, config, &theta, &mut rank_warning)?;
        theta = lower.theta;

        if config.variant == Variant::IfefPd {
            lambda_up = primal_dual_update(
                lambda_up,
                lower.mean_sq_residual,
                config.dual_lr,
                config.lambda_min,
                config.lambda_max,
            );
        }

        let (new_params, upper_loss) =
            upper_step(&params, &theta, problem, colloc, &extension, lambda_up, &mut opt)?;
        params = new_params;

        let rel_l2 = match evaluator {
            Some(ev) => ev.rel_l2_basis(&basis, &theta)?,
            None => f64::NAN,
        };
        let record = EpochRecord {
            epoch,
            lower_loss: lower.lower_after,
            lower_before: lower.lower_before,
            lower_reg: lower.reg_after,
            lower_reg_before: lower.reg_before,
            upper_loss,
            rel_l2,
            lambda: lambda_up,
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record);
        }
        records.push(record);
    }

    // Return omega_N with theta re-solved at it.
    let basis = FeatureBasis::new(params.clone(), extension.clone())?;
    let final_lower = {
        let out = lower_solve(problem, &basis, colloc, config, &theta, &mut rank_warning)?;
        theta = out.theta;
        out.lower_after
    };
    let final_rel_l2 = match evaluator {
        Some(ev) => ev.rel_l2_basis(&basis, &theta)?,
        None => f64::NAN,
    };

    Ok(IfefOutcome {
        params,
        theta,
        extension,
        records,
        rank_warning,
        final_rel_l2,
        final_lower,
    })
}

/// The vanilla baseline variant: plain first-order training of the readout
/// network for the full epoch budget, recorded in the same row format.
pub fn train_vanilla(
    problem: &PdeProblem,
    params0: &NetworkParams,
    colloc: &CollocationSet,
    config: &TrainConfig,
    evaluator: Option<&GridEvaluator>,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<(NetworkParams, Vec<EpochRecord>)> {
    config.validate()?;
    if params0.readout.is_none() {
        return Err(IfefError::config("vanilla training needs a readout row"));
    }
    let epochs = config.pretrain_epochs + config.ifef_epochs;
    let mut params = params0.clone();
    let mut adam = Adam::new(params.param_count(), config.upper_lr);
    let mut records = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let t0 = Instant::now();
        let readout = params.readout.clone().unwrap();
        let loss =
            PinnLoss::new(problem, colloc, config.lambda_pretrain, Head::Readout(&readout))?;
        let (value, grad) = param_gradient(&params, &loss).map_err(|e| match e {
            IfefError::Numeric { msg, .. } => IfefError::numeric(Some(epoch), msg),
            other => other,
        })?;
        let gflat = grad.to_flat();
        let mut pflat = params.to_flat();
        adam.step(&mut pflat, &gflat);
        params = params.from_flat(&pflat)?;

        let rel_l2 = match evaluator {
            Some(ev) => ev.rel_l2_readout(&params)?,
            None => f64::NAN,
        };
        let record = EpochRecord {
            epoch,
            lower_loss: value,
            lower_before: value,
            lower_reg: value,
            lower_reg_before: value,
            upper_loss: value,
            rel_l2,
            lambda: config.lambda_pretrain,
            wall_ms: t0.elapsed().as_millis() as u64,
        };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record);
        }
        records.push(record);
    }
    Ok((params, records))
}
