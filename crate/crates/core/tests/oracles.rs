//! Finite-difference and algebraic oracles for the gradient paths that the
//! training loop relies on: the upper gradient through the Fourier extension,
//! the implicit-function hypergradient, the nonlinear lower solve against its
//! linearization, and plain-gradient monotonicity.

use ifef_pinn::diff::{loss_value, param_gradient, Jet2, JetBatch, LossFunctional, NetworkParams};
use ifef_pinn::fd;
use ifef_pinn::opt::{UpperOptimizer, UpperRule};
use ifef_pinn::pde::{
    build_burgers_design, build_design, make_burgers, make_convection, make_helmholtz,
    sample_uniform, CollocationSet, GridSpec, PdeProblem,
};
use ifef_pinn::qp::{
    assemble_from_design, burgers_lower_loss, nonlinear_lower_solve, solve_regularized, Theta,
};
use ifef_pinn::train::hypergrad::{composed_upper_loss, hypergradient_ift, partial_upper_gradient};
use ifef_pinn::train::{upper_step, Head, PinnLoss, TrainConfig};
use ndarray::{Array1, Array2};

fn helmholtz_setup(
    widths: &[usize],
    grid: usize,
    boundary: usize,
) -> (PdeProblem, CollocationSet, NetworkParams) {
    let problem = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![grid, grid], boundary_total: boundary },
        0,
    )
    .unwrap();
    let params = NetworkParams::glorot(widths, false, 71).unwrap();
    (problem, colloc, params)
}

#[test]
fn jet_arithmetic_obeys_product_and_chain_rules() {
    // Random smooth closures built from jet operations, checked against FD.
    let f = |x: &[f64]| -> Jet2 {
        let a = Jet2::var(x[0], 0, 2);
        let b = Jet2::var(x[1], 1, 2);
        a.sin().mul(&b.scale(0.7).cos()).add(&a.mul(&b).exp().scale(0.1)).tanh()
    };
    let fv = |x: &[f64]| f(x).value;
    for k in 0..20u64 {
        let x = vec![
            ifef_pinn::rng::unit_open01(3, 2 * k) - 0.5,
            ifef_pinn::rng::unit_open01(3, 2 * k + 1) - 0.5,
        ];
        let jet = f(&x);
        for i in 0..2 {
            let g = fd::central_grad(&fv, &x, i, 1e-5);
            let s = fd::central_diag2(&fv, &x, i, 1e-4);
            assert!(fd::close_rel(jet.grad[i], g, 1e-6), "grad axis {i}");
            assert!(fd::close_rel(jet.diag2[i], s, 1e-4), "diag2 axis {i}");
        }
    }
}

#[test]
fn upper_gradient_matches_fd_through_rff_extension() {
    // <= 50 parameters: [2,4,3] has 2*4+4 + 4*3+3 = 27.
    let (problem, colloc, params) = helmholtz_setup(&[2, 4, 3], 3, 4);
    let config = TrainConfig { d: 7, seed: 5, ..TrainConfig::default() };
    let extension = config.build_extension(params.hidden_dim()).unwrap();
    let theta = Array1::from_shape_fn(14, |i| ifef_pinn::rng::gaussian(9, i as u64));

    let loss = PinnLoss::new(&problem, &colloc, 0.01, Head::Basis {
        theta: &theta,
        extension: &extension,
    })
    .unwrap();
    let (_, grad) = param_gradient(&params, &loss).unwrap();
    let got = grad.to_flat();

    let flat0 = params.to_flat();
    let f = |p: &[f64]| -> f64 {
        let candidate = params.from_flat(p).unwrap();
        let loss = PinnLoss::new(&problem, &colloc, 0.01, Head::Basis {
            theta: &theta,
            extension: &extension,
        })
        .unwrap();
        loss_value(&candidate, &loss).unwrap()
    };
    let want = fd::central_grad_vec(&f, &flat0, 1e-6);
    let worst = fd::max_rel_err(&got, &want);
    assert!(worst <= 1e-5, "max rel err {worst:.3e}");
}

#[test]
fn upper_gradient_matches_fd_on_burgers_nonlinearity() {
    let problem = make_burgers(0.01 / std::f64::consts::PI);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![3, 3], boundary_total: 6 },
        0,
    )
    .unwrap();
    let params = NetworkParams::glorot(&[2, 4, 3], false, 81).unwrap();
    let config = TrainConfig { d: 6, seed: 11, ..TrainConfig::default() };
    let extension = config.build_extension(3).unwrap();
    let theta = Array1::from_shape_fn(12, |i| 0.5 * ifef_pinn::rng::gaussian(13, i as u64));

    let mk = || {
        PinnLoss::new(&problem, &colloc, 0.1, Head::Basis {
            theta: &theta,
            extension: &extension,
        })
        .unwrap()
    };
    let (_, grad) = param_gradient(&params, &mk()).unwrap();
    let got = grad.to_flat();

    let flat0 = params.to_flat();
    let f = |p: &[f64]| -> f64 { loss_value(&params.from_flat(p).unwrap(), &mk()).unwrap() };
    let want = fd::central_grad_vec(&f, &flat0, 1e-6);
    let worst = fd::max_rel_err(&got, &want);
    assert!(worst <= 1e-5, "max rel err {worst:.3e}");
}

#[test]
fn zero_parameters_give_zero_gradient() {
    // u = W h(x) with every parameter zero, targets zero: stationary point.
    let (problem, colloc, params) = helmholtz_setup(&[2, 4, 3], 3, 4);
    let zero = params.from_flat(&vec![0.0; params.param_count()]).unwrap();
    let mut zero = zero;
    zero.readout = Some(Array2::zeros((1, 3)));
    let readout = zero.readout.clone().unwrap();
    // Zero targets: overwrite the problem's source with zero by using the
    // convection problem whose source is identically zero.
    let problem0 = make_convection(1.0);
    let colloc0 = sample_uniform(
        &problem0,
        &GridSpec { interior: vec![3, 3], boundary_total: 4 },
        0,
    )
    .unwrap();
    // Keep only pair rows (targets zero) by zeroing point targets.
    let mut colloc0 = colloc0;
    for s in &mut colloc0.boundary {
        if let ifef_pinn::pde::BoundarySample::Point { target, .. } = s {
            *target = 0.0;
        }
    }
    let loss = PinnLoss::new(&problem0, &colloc0, 0.01, Head::Readout(&readout)).unwrap();
    let (value, grad) = param_gradient(&zero, &loss).unwrap();
    assert_eq!(value, 0.0);
    assert!(grad.to_flat().iter().all(|g| *g == 0.0));
    drop((problem, colloc));
}

#[test]
fn gradient_is_linear_in_adjoint_seeds() {
    // Doubling every loss-term weight doubles the parameter gradient.
    struct Scaled<'a> {
        inner: &'a PinnLoss<'a>,
        factor: f64,
    }
    impl LossFunctional for Scaled<'_> {
        fn points(&self) -> &[Vec<f64>] {
            self.inner.points()
        }
        fn order(&self) -> u8 {
            self.inner.order()
        }
        fn value(&self, jets: &[JetBatch]) -> ifef_pinn::Result<f64> {
            Ok(self.factor * self.inner.value(jets)?)
        }
        fn value_and_adjoints(
            &self,
            jets: &[JetBatch],
        ) -> ifef_pinn::Result<(f64, Vec<JetBatch>, Option<Array2<f64>>)> {
            let (v, mut adj, mut readout) = self.inner.value_and_adjoints(jets)?;
            for a in &mut adj {
                a.value *= self.factor;
                a.grad *= self.factor;
                a.diag2 *= self.factor;
            }
            if let Some(r) = &mut readout {
                *r *= self.factor;
            }
            Ok((self.factor * v, adj, readout))
        }
    }

    let (problem, colloc, params) = helmholtz_setup(&[2, 5, 4], 3, 4);
    let config = TrainConfig { d: 6, seed: 3, ..TrainConfig::default() };
    let extension = config.build_extension(4).unwrap();
    let theta = Array1::from_shape_fn(12, |i| ifef_pinn::rng::gaussian(21, i as u64));
    let base = PinnLoss::new(&problem, &colloc, 0.01, Head::Basis {
        theta: &theta,
        extension: &extension,
    })
    .unwrap();

    let (_, g1) = param_gradient(&params, &base).unwrap();
    let (_, g2) = param_gradient(&params, &Scaled { inner: &base, factor: 2.0 }).unwrap();
    let g1 = g1.to_flat();
    let g2 = g2.to_flat();
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn hypergradient_matches_fd_of_composed_map() {
    // [2,4,3] hidden-only: 27 parameters <= 40.
    let (problem, colloc, params) = helmholtz_setup(&[2, 4, 3], 3, 6);
    let config = TrainConfig { d: 5, gamma: 1e-6, seed: 17, ..TrainConfig::default() };

    let (hyper, _) = hypergradient_ift(&params, &problem, &colloc, &config).unwrap();

    let flat0 = params.to_flat();
    let f = |p: &[f64]| -> f64 {
        composed_upper_loss(&params.from_flat(p).unwrap(), &problem, &colloc, &config).unwrap()
    };
    let want = fd::central_grad_vec(&f, &flat0, 1e-5);
    let worst = fd::max_rel_err(&hyper, &want);
    assert!(worst <= 1e-4, "max rel err {worst:.3e}");
}

#[test]
fn hypergradient_reduces_to_partial_at_gamma_zero() {
    // Envelope property: at the exact minimizer dL/dtheta = 0, so the IFT
    // correction vanishes.
    let (problem, colloc, params) = helmholtz_setup(&[2, 4, 3], 3, 6);
    let config = TrainConfig { d: 5, gamma: 0.0, seed: 19, ..TrainConfig::default() };

    let (hyper, theta) = hypergradient_ift(&params, &problem, &colloc, &config).unwrap();
    let partial = partial_upper_gradient(&params, &problem, &colloc, &config, &theta).unwrap();
    let scale = partial.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = hyper
        .iter()
        .zip(&partial)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= 1e-8 * (1.0 + scale), "gap {worst:.3e} at scale {scale:.3e}");
}

#[test]
fn nonlinear_solve_matches_closed_form_when_linearized() {
    // Force the nonlinearity off by zeroing the convective term: with
    // residual u_t - nu u_xx the lower problem is the same least squares the
    // closed-form path solves.
    let problem = make_burgers(0.01 / std::f64::consts::PI);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![6, 6], boundary_total: 12 },
        0,
    )
    .unwrap();
    let params = NetworkParams::glorot(&[2, 6, 5], false, 91).unwrap();
    let config = TrainConfig { d: 4, seed: 23, ..TrainConfig::default() };
    let extension = config.build_extension(5).unwrap();
    let basis = ifef_pinn::features::FeatureBasis::new(params.clone(), extension).unwrap();

    let mut design = build_burgers_design(&problem, &basis, &colloc).unwrap();
    design.val.fill(0.0); // kills u * u_x

    // Closed-form reference: rows are d_t - nu d_xx.
    let rows = &design.d_t - &(&design.d_xx * design.nu);
    let linear = ifef_pinn::pde::DesignMatrices {
        b_u: design.b_u.clone(),
        g_u: design.g_u.clone(),
        r_f: rows,
        f_f: design.f_f.clone(),
    };
    let lambda = 0.1;
    let sys = assemble_from_design(&linear, lambda).unwrap();
    let reference = solve_regularized(&sys, 0.0).unwrap();

    let theta0 = Theta::zeros(8);
    let (theta, trace) =
        nonlinear_lower_solve(&design, lambda, &theta0, 30000, 2e-3).unwrap();
    assert!(trace.last().unwrap() <= trace.first().unwrap());
    let gap = (&theta.0 - &reference.0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(gap <= 1e-4, "gap to closed form {gap:.3e}");
}

#[test]
fn nonlinear_solve_zero_steps_and_decrease() {
    let problem = make_burgers(0.01 / std::f64::consts::PI);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![6, 6], boundary_total: 12 },
        0,
    )
    .unwrap();
    let params = NetworkParams::glorot(&[2, 6, 5], false, 93).unwrap();
    let config = TrainConfig { d: 4, seed: 29, ..TrainConfig::default() };
    let extension = config.build_extension(5).unwrap();
    let basis = ifef_pinn::features::FeatureBasis::new(params, extension).unwrap();
    let design = build_burgers_design(&problem, &basis, &colloc).unwrap();

    let theta0 = Theta(Array1::from_shape_fn(8, |i| ifef_pinn::rng::gaussian(31, i as u64)));
    let (same, trace) = nonlinear_lower_solve(&design, 0.1, &theta0, 0, 1e-3).unwrap();
    assert_eq!(same, theta0);
    assert_eq!(trace.len(), 1);

    let initial = burgers_lower_loss(&design, 0.1, &theta0);
    let (theta, _) = nonlinear_lower_solve(&design, 0.1, &theta0, 500, 1e-3).unwrap();
    assert!(burgers_lower_loss(&design, 0.1, &theta) <= initial);
}

#[test]
fn plain_gd_upper_steps_decrease_monotonically() {
    // Sufficient-decrease property with a small fixed step at fixed theta.
    let problem = make_convection(1.0);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![4, 4], boundary_total: 8 },
        0,
    )
    .unwrap();
    let params = NetworkParams::glorot(&[2, 6, 5], false, 37).unwrap();
    let config = TrainConfig { d: 8, seed: 37, gamma: 1e-6, ..TrainConfig::default() };
    let extension = config.build_extension(5).unwrap();

    let basis = ifef_pinn::features::FeatureBasis::new(params.clone(), extension.clone()).unwrap();
    let design = build_design(&problem, &basis, &colloc).unwrap();
    let sys = assemble_from_design(&design, config.lambda_ll).unwrap();
    let theta = solve_regularized(&sys, config.gamma).unwrap();

    let mut opt = UpperOptimizer::new(UpperRule::Sgd, params.param_count(), 1e-5);
    let mut current = params;
    let mut losses = Vec::new();
    for _ in 0..100 {
        let (next, value) = upper_step(
            &current,
            &theta,
            &problem,
            &colloc,
            &extension,
            config.lambda_ll,
            &mut opt,
        )
        .unwrap();
        losses.push(value);
        current = next;
    }
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss increased: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_fixed() {
    let (problem, colloc, params) = helmholtz_setup(&[2, 4, 3], 3, 4);
    let config = TrainConfig { d: 4, seed: 41, ..TrainConfig::default() };
    let extension = config.build_extension(3).unwrap();
    let theta = Theta::zeros(8);
    let mut opt = UpperOptimizer::new(UpperRule::Sgd, params.param_count(), 0.0);
    let (next, _) = upper_step(
        &params,
        &theta,
        &problem,
        &colloc,
        &extension,
        0.01,
        &mut opt,
    )
    .unwrap();
    assert_eq!(next.to_flat(), params.to_flat());
}
