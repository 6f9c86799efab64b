//! Fast runtime oracle suite behind `ifef selfcheck`: finite-difference
//! agreement, quadratic-form equivalence, suite self-consistency, basis
//! identities. Output is a machine-parseable line per check:
//! `CHECK <name> PASS|FAIL <detail>`.

use crate::diff::{hidden_jets, hidden_values, loss_value, param_gradient, NetworkParams};
use crate::error::Result;
use crate::features::{sample_rff, Extension, FeatureBasis};
use crate::fd;
use crate::pde::{
    apply_linear_jet, make_burgers, make_convection, make_convection_diffusion, make_helmholtz,
    make_multiscale_convection, sample_uniform, BoundaryDescriptor, GridSpec, InteriorOp,
    PdeProblem,
};
use crate::qp::{
    assemble_from_design, rank_guard, solve_regularized, QpSystem, RankStatus, Theta,
};
use crate::rng;
use crate::train::{Head, PinnLoss};
use ndarray::{Array, Array1};
use std::f64::consts::PI;
use std::time::Instant;

pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub ms: u64,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "CHECK {} {} {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

type Check = (&'static str, fn() -> std::result::Result<String, String>);

const CHECKS: &[Check] = &[
    ("jet_grad_fd", check_jet_grad_fd),
    ("jet_diag2_fd", check_jet_diag2_fd),
    ("jet_determinism", check_jet_determinism),
    ("param_grad_fd", check_param_grad_fd),
    ("psi_norm_identity", check_psi_norm),
    ("rff_nesting", check_rff_nesting),
    ("qp_equivalence", check_qp_equivalence),
    ("qp_solve_optimality", check_qp_solve),
    ("rank_guard", check_rank_guard),
    ("suite_consistency", check_suite_consistency),
    ("relative_l2", check_relative_l2),
    ("spectrum_calibration", check_spectrum_calibration),
];

/// Run every check, returning results in order.
pub fn run_all() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let t0 = Instant::now();
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult { name, passed, detail, ms: t0.elapsed().as_millis() as u64 }
        })
        .collect()
}

fn random_point(seed: u64, k: u64, lo: f64, hi: f64) -> Vec<f64> {
    (0..2)
        .map(|i| lo + (hi - lo) * rng::unit_open01(seed, 2 * k + i))
        .collect()
}

fn check_jet_grad_fd() -> std::result::Result<String, String> {
    let params = NetworkParams::glorot(&[2, 10, 8], false, 11).unwrap();
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let x = random_point(5, k, -1.0, 1.0);
        let jets = hidden_jets(&params, &x, 2).map_err(|e| e.to_string())?;
        for unit in 0..8 {
            let f = |y: &[f64]| hidden_values(&params, y).unwrap()[unit];
            for i in 0..2 {
                let want = fd::central_grad(&f, &x, i, 1e-4);
                worst = worst.max((jets[unit].grad[i] - want).abs() / (1.0 + want.abs()));
            }
        }
    }
    if worst <= 1e-6 {
        Ok(format!("max rel err {worst:.2e} <= 1e-6"))
    } else {
        Err(format!("max rel err {worst:.2e} > 1e-6"))
    }
}

fn check_jet_diag2_fd() -> std::result::Result<String, String> {
    let params = NetworkParams::glorot(&[2, 10, 8], false, 13).unwrap();
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let x = random_point(7, k, -1.0, 1.0);
        let jets = hidden_jets(&params, &x, 2).map_err(|e| e.to_string())?;
        for unit in 0..8 {
            let f = |y: &[f64]| hidden_values(&params, y).unwrap()[unit];
            for i in 0..2 {
                let want = fd::central_diag2(&f, &x, i, 1e-4);
                worst = worst.max((jets[unit].diag2[i] - want).abs() / (1.0 + want.abs()));
            }
        }
    }
    if worst <= 1e-4 {
        Ok(format!("max rel err {worst:.2e} <= 1e-4"))
    } else {
        Err(format!("max rel err {worst:.2e} > 1e-4"))
    }
}

fn check_jet_determinism() -> std::result::Result<String, String> {
    let params = NetworkParams::glorot(&[2, 12, 9], false, 17).unwrap();
    for k in 0..10u64 {
        let x = random_point(9, k, -1.0, 1.0);
        let a = hidden_jets(&params, &x, 2).map_err(|e| e.to_string())?;
        let b = hidden_jets(&params, &x, 2).map_err(|e| e.to_string())?;
        for (ja, jb) in a.iter().zip(&b) {
            if ja.value.to_bits() != jb.value.to_bits()
                || ja.grad.iter().zip(&jb.grad).any(|(x, y)| x.to_bits() != y.to_bits())
                || ja.diag2.iter().zip(&jb.diag2).any(|(x, y)| x.to_bits() != y.to_bits())
            {
                return Err("two evaluations differ bitwise".into());
            }
        }
    }
    Ok("bit-identical across invocations".into())
}

fn small_helmholtz_setup() -> (PdeProblem, crate::pde::CollocationSet, NetworkParams) {
    let problem = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
    let colloc = sample_uniform(
        &problem,
        &GridSpec { interior: vec![3, 3], boundary_total: 4 },
        0,
    )
    .unwrap();
    // 2*4 + 4 + 4*2 + 2 + readout 2 = 24 parameters.
    let params = NetworkParams::glorot(&[2, 4, 2], true, 23).unwrap();
    (problem, colloc, params)
}

fn check_param_grad_fd() -> std::result::Result<String, String> {
    let (problem, colloc, params) = small_helmholtz_setup();
    let readout = params.readout.clone().unwrap();
    let loss = PinnLoss::new(&problem, &colloc, 0.01, Head::Readout(&readout)).unwrap();
    let (_, grad) = param_gradient(&params, &loss).map_err(|e| e.to_string())?;
    let got = grad.to_flat();

    let flat0 = params.to_flat();
    let f = |p: &[f64]| -> f64 {
        let candidate = params.from_flat(p).unwrap();
        let readout = candidate.readout.clone().unwrap();
        let loss = PinnLoss::new(&problem, &colloc, 0.01, Head::Readout(&readout)).unwrap();
        loss_value(&candidate, &loss).unwrap()
    };
    let want = fd::central_grad_vec(&f, &flat0, 1e-6);
    let worst = fd::max_rel_err(&got, &want);
    if worst <= 1e-5 {
        Ok(format!("max rel err {worst:.2e} <= 1e-5 over {} params", got.len()))
    } else {
        Err(format!("max rel err {worst:.2e} > 1e-5"))
    }
}

fn check_psi_norm() -> std::result::Result<String, String> {
    let params = NetworkParams::glorot(&[2, 8, 6], false, 31).unwrap();
    let basis =
        FeatureBasis::new(params, Extension::Rff(sample_rff(24, 6, 1.0, 5).unwrap())).unwrap();
    let mut worst = 0.0f64;
    for k in 0..50u64 {
        let x = random_point(15, k, -2.0, 2.0);
        let psi = basis.psi_values(&x).unwrap();
        worst = worst.max((psi.dot(&psi) - 1.0).abs());
    }
    if worst <= 1e-12 {
        Ok(format!("max |norm^2 - 1| = {worst:.2e}"))
    } else {
        Err(format!("norm identity broken: {worst:.2e}"))
    }
}

fn check_rff_nesting() -> std::result::Result<String, String> {
    let small = sample_rff(8, 5, 1.0, 77).unwrap();
    let large = sample_rff(32, 5, 1.0, 77).unwrap();
    for i in 0..8 {
        for j in 0..5 {
            if small.matrix()[[i, j]].to_bits() != large.matrix()[[i, j]].to_bits() {
                return Err(format!("entry ({i},{j}) differs between D=8 and D=32"));
            }
        }
    }
    Ok("D=8 matrix is the exact prefix of D=32".into())
}

pub(crate) fn qp_equivalence_detail(
    assemble_fn: &dyn Fn(&crate::pde::DesignMatrices, f64) -> Result<QpSystem>,
) -> std::result::Result<String, String> {
    let mut worst = 0.0f64;
    for trial in 0..10u64 {
        let f = if trial % 2 == 0 { 6 } else { 20 };
        let d = crate::pde::DesignMatrices {
            b_u: Array::from_shape_fn((4 + trial as usize, f), |(i, j)| {
                rng::gaussian(100 + trial, (i * f + j) as u64)
            }),
            g_u: Array::from_shape_fn(4 + trial as usize, |i| rng::gaussian(200 + trial, i as u64)),
            r_f: Array::from_shape_fn((8, f), |(i, j)| {
                rng::gaussian(300 + trial, (i * f + j) as u64)
            }),
            f_f: Array::from_shape_fn(8, |i| rng::gaussian(400 + trial, i as u64)),
        };
        let lambda = 0.1 + 0.2 * trial as f64;
        let sys = assemble_fn(&d, lambda).map_err(|e| e.to_string())?;
        for k in 0..5u64 {
            let th = Theta(Array::from_shape_fn(f, |i| rng::gaussian(500 + k, i as u64)));
            let via_q = sys.quadratic_value(&th);
            let direct = crate::qp::direct_loss(&d, lambda, &th);
            worst = worst.max((via_q - direct).abs() / (1.0 + direct.abs()));
        }
    }
    if worst <= 1e-12 {
        Ok(format!("max rel gap {worst:.2e} <= 1e-12"))
    } else {
        Err(format!("quadratic form disagrees with the direct loss: {worst:.2e}"))
    }
}

fn check_qp_equivalence() -> std::result::Result<String, String> {
    qp_equivalence_detail(&|d, l| assemble_from_design(d, l))
}

fn check_qp_solve() -> std::result::Result<String, String> {
    for trial in 0..5u64 {
        let f = 10;
        let d = crate::pde::DesignMatrices {
            b_u: Array::from_shape_fn((12, f), |(i, j)| rng::gaussian(600 + trial, (i * f + j) as u64)),
            g_u: Array::from_shape_fn(12, |i| rng::gaussian(700 + trial, i as u64)),
            r_f: Array::from_shape_fn((20, f), |(i, j)| rng::gaussian(800 + trial, (i * f + j) as u64)),
            f_f: Array::from_shape_fn(20, |i| rng::gaussian(900 + trial, i as u64)),
        };
        let sys = assemble_from_design(&d, 0.7).map_err(|e| e.to_string())?;
        let th = solve_regularized(&sys, 1e-10).map_err(|e| e.to_string())?;
        let base = sys.regularized_value(&th, 1e-10);
        for k in 0..10u64 {
            let mut delta = Array1::from_shape_fn(f, |i| rng::gaussian(1000 + k, i as u64));
            let norm = delta.dot(&delta).sqrt();
            delta.mapv_inplace(|v| v / norm * 1e-3);
            if sys.regularized_value(&Theta(&th.0 + &delta), 1e-10) < base - 1e-15 {
                return Err(format!("perturbation improved the solution at trial {trial}"));
            }
        }
    }
    Ok("minimizer survives random perturbation witnesses".into())
}

fn check_rank_guard() -> std::result::Result<String, String> {
    let make = |f: usize| -> QpSystem {
        let d = crate::pde::DesignMatrices {
            b_u: Array::from_shape_fn((40, f), |(i, j)| rng::gaussian(1, (i * f + j) as u64)),
            g_u: Array1::zeros(40),
            r_f: Array::from_shape_fn((60, f), |(i, j)| rng::gaussian(2, (i * f + j) as u64)),
            f_f: Array1::zeros(60),
        };
        assemble_from_design(&d, 1.0).unwrap()
    };
    let ok = make(20);
    if rank_guard(&ok, 0.0).map_err(|e| e.to_string())? != RankStatus::Ok {
        return Err("well-posed system flagged".into());
    }
    let under = make(200);
    if rank_guard(&under, 0.0).is_ok() {
        return Err("underdetermined system with gamma=0 not rejected".into());
    }
    if rank_guard(&under, 1e-7).map_err(|e| e.to_string())? != RankStatus::Underdetermined {
        return Err("underdetermined system with gamma>0 not flagged".into());
    }
    Ok("reject at gamma=0, warn at gamma>0, pass when N >= 2D".into())
}

/// Closed-form solutions satisfy their PDEs and boundary conditions.
fn check_suite_consistency() -> std::result::Result<String, String> {
    let problems = vec![
        make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]),
        make_convection(50.0),
        make_convection_diffusion(1.0, 5e-5, 1.0, 0.1, 4.0 * PI, 60.0 * PI),
        make_multiscale_convection(&[1.0, 2.0, 5.0], &[1.0, 1.0, 1.0]),
    ];
    let mut worst = 0.0f64;
    for problem in &problems {
        let exact = problem.exact.as_ref().unwrap();
        let jet = problem.exact_jet.as_ref().unwrap();
        for k in 0..100u64 {
            let x: Vec<f64> = problem
                .domain
                .iter()
                .enumerate()
                .map(|(i, (lo, hi))| lo + (hi - lo) * rng::unit_open01(42, 2 * k + i as u64))
                .collect();
            let residual = match &problem.interior {
                InteriorOp::Linear(op) => apply_linear_jet(op, &jet(&x)) - (problem.source)(&x),
                InteriorOp::Burgers { .. } => unreachable!(),
            };
            worst = worst.max(residual.abs());
        }
        for desc in &problem.boundary {
            match desc {
                BoundaryDescriptor::Face { axis, at_hi, target, .. } => {
                    for k in 0..25u64 {
                        let free = if *axis == 0 { 1 } else { 0 };
                        let (lo, hi) = problem.domain[free];
                        let mut x = vec![0.0, 0.0];
                        x[*axis] = if *at_hi { problem.domain[*axis].1 } else { problem.domain[*axis].0 };
                        x[free] = lo + (hi - lo) * rng::unit_open01(7, k);
                        worst = worst.max((exact(&x) - target(&x)).abs());
                    }
                }
                BoundaryDescriptor::PeriodicPair { axis, order } => {
                    for k in 0..25u64 {
                        let free = if *axis == 0 { 1 } else { 0 };
                        let (lo, hi) = problem.domain[free];
                        let v = lo + (hi - lo) * rng::unit_open01(8, k);
                        let mut a = vec![0.0, 0.0];
                        let mut b = vec![0.0, 0.0];
                        a[*axis] = problem.domain[*axis].0;
                        b[*axis] = problem.domain[*axis].1;
                        a[free] = v;
                        b[free] = v;
                        let gap = match order {
                            0 => exact(&a) - exact(&b),
                            _ => jet(&a).grad[*axis] - jet(&b).grad[*axis],
                        };
                        worst = worst.max(gap.abs());
                    }
                }
            }
        }
    }
    // The Burgers operator against a manufactured solution.
    let burgers = make_burgers(0.01 / PI);
    let nu = match burgers.interior {
        InteriorOp::Burgers { nu } => nu,
        _ => unreachable!(),
    };
    for k in 0..20u64 {
        let t = rng::unit_open01(9, 2 * k);
        let x = -1.0 + 2.0 * rng::unit_open01(9, 2 * k + 1);
        let jt = crate::diff::Jet2::var(t, 0, 2);
        let jx = crate::diff::Jet2::var(x, 1, 2);
        let u = jt.scale(-1.0).exp().mul(&jx.scale(PI).sin());
        let got = crate::pde::burgers_residual_jet(nu, &u);
        let e = (-t).exp();
        let want = -e * (PI * x).sin()
            + e * e * PI * (PI * x).sin() * (PI * x).cos()
            + nu * PI * PI * e * (PI * x).sin();
        worst = worst.max((got - want).abs() / (1.0 + want.abs()));
    }
    if worst <= 1e-8 {
        Ok(format!("max residual {worst:.2e} <= 1e-8"))
    } else {
        Err(format!("suite inconsistency: {worst:.2e}"))
    }
}

fn check_relative_l2() -> std::result::Result<String, String> {
    let e = vec![1.0, -2.0, 0.5, 3.0];
    if crate::eval::relative_l2(&e, &e).map_err(|x| x.to_string())? != 0.0 {
        return Err("identical grids should give zero".into());
    }
    let doubled: Vec<f64> = e.iter().map(|v| 2.0 * v).collect();
    let r = crate::eval::relative_l2(&doubled, &e).map_err(|x| x.to_string())?;
    if (r - 1.0).abs() > 1e-14 {
        return Err(format!("2x scaling should give 1, got {r}"));
    }
    // Scale covariance.
    let p = vec![1.1, -1.9, 0.4, 3.2];
    let r1 = crate::eval::relative_l2(&p, &e).unwrap();
    let sp: Vec<f64> = p.iter().map(|v| -7.0 * v).collect();
    let se: Vec<f64> = e.iter().map(|v| -7.0 * v).collect();
    let r2 = crate::eval::relative_l2(&sp, &se).unwrap();
    if (r1 - r2).abs() > 1e-14 {
        return Err("not scale covariant".into());
    }
    Ok("zero, scaling and covariance identities hold".into())
}

fn check_spectrum_calibration() -> std::result::Result<String, String> {
    let cfg = crate::eval::SpectrumConfig {
        frequencies: vec![1.0, 2.0, 5.0, 10.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
        amplitudes: vec![1.0; 10],
        grid_points: 512,
        time_slice: 0.0,
        d_sweep: vec![],
        seeds: vec![],
    };
    for &f in &cfg.frequencies {
        let u = move |x: f64| (std::f64::consts::TAU * f * x).sin();
        let mags = crate::eval::spectrum_magnitudes(&u, &cfg).map_err(|e| e.to_string())?;
        let idx = cfg.frequencies.iter().position(|&g| g == f).unwrap();
        if (mags[idx] - 1.0).abs() > 1e-10 {
            return Err(format!("unit sinusoid at f={f} gives {}", mags[idx]));
        }
    }
    Ok("unit sinusoids calibrate to 1 +- 1e-10 at all ten frequencies".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let results = run_all();
        for r in &results {
            assert!(r.passed, "{}", r.line());
        }
        assert_eq!(results.len(), CHECKS.len());
    }

    #[test]
    fn injected_sign_error_fails_qp_equivalence() {
        let broken = |d: &crate::pde::DesignMatrices, l: f64| -> Result<QpSystem> {
            let mut sys = assemble_from_design(d, l)?;
            sys.c.mapv_inplace(|v| -v);
            Ok(sys)
        };
        assert!(qp_equivalence_detail(&broken).is_err());
    }

    #[test]
    fn line_protocol_format() {
        let r = CheckResult { name: "demo", passed: true, detail: "ok".into(), ms: 3 };
        assert_eq!(r.line(), "CHECK demo PASS ok");
    }
}
