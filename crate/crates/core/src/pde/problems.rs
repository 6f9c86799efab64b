//! The benchmark problems. Axis conventions: Helmholtz uses (x, y); every
//! time-dependent problem uses (t, x) with t on axis 0.

use super::{
    BcKind, BoundaryDescriptor, Deriv, InteriorOp, LinearOperatorSpec, PdeProblem,
};
use crate::diff::Jet2;
use std::f64::consts::PI;

/// 2D Helmholtz: u_xx + u_yy + u = f on `domain`, u = 0 on the boundary,
/// exact solution sin(a1 pi x) sin(a2 pi y).
pub fn make_helmholtz(a1: f64, a2: f64, domain: [(f64, f64); 2]) -> PdeProblem {
    let exact = move |x: &[f64]| (a1 * PI * x[0]).sin() * (a2 * PI * x[1]).sin();
    // f = (Laplacian + id) of the exact solution.
    let source = move |x: &[f64]| (1.0 - PI * PI * (a1 * a1 + a2 * a2)) * exact(x);
    let exact_jet = move |x: &[f64]| {
        let jx = Jet2::var(x[0], 0, 2).scale(a1 * PI).sin();
        let jy = Jet2::var(x[1], 1, 2).scale(a2 * PI).sin();
        jx.mul(&jy)
    };
    let boundary = (0..2)
        .flat_map(|axis| {
            [false, true].into_iter().map(move |at_hi| BoundaryDescriptor::Face {
                axis,
                at_hi,
                kind: BcKind::Dirichlet,
                target: Box::new(|_: &[f64]| 0.0),
            })
        })
        .collect();
    PdeProblem {
        name: format!("helmholtz_a1_{a1}_a2_{a2}"),
        dim: 2,
        domain: domain.to_vec(),
        interior: InteriorOp::Linear(LinearOperatorSpec {
            terms: vec![(Deriv::Second(0), 1.0), (Deriv::Second(1), 1.0), (Deriv::Value, 1.0)],
        }),
        boundary,
        source: Box::new(source),
        exact: Some(Box::new(exact)),
        exact_jet: Some(Box::new(exact_jet)),
    }
}

/// 1D convection u_t + beta u_x = 0 on (t, x) in [0,1] x [0, 2 pi],
/// u(x, 0) = sin x, periodic in x. Exact solution sin(x - beta t).
pub fn make_convection(beta: f64) -> PdeProblem {
    let exact = move |x: &[f64]| (x[1] - beta * x[0]).sin();
    let exact_jet = move |x: &[f64]| {
        let t = Jet2::var(x[0], 0, 2);
        let s = Jet2::var(x[1], 1, 2);
        s.sub(&t.scale(beta)).sin()
    };
    PdeProblem {
        name: format!("convection_beta_{beta}"),
        dim: 2,
        domain: vec![(0.0, 1.0), (0.0, 2.0 * PI)],
        interior: InteriorOp::Linear(LinearOperatorSpec {
            terms: vec![(Deriv::First(0), 1.0), (Deriv::First(1), beta)],
        }),
        boundary: vec![
            BoundaryDescriptor::Face {
                axis: 0,
                at_hi: false,
                kind: BcKind::Initial,
                target: Box::new(|x: &[f64]| x[1].sin()),
            },
            BoundaryDescriptor::PeriodicPair { axis: 1, order: 0 },
        ],
        source: Box::new(|_: &[f64]| 0.0),
        exact: Some(Box::new(exact)),
        exact_jet: Some(Box::new(exact_jet)),
    }
}

/// Multi-scale 1D convection-diffusion u_t + c u_x - d u_xx = 0 on
/// [0,1] x [0,1], periodic in x (value and slope), initial condition a sum of
/// two sinusoids. Exact solution: damped traveling waves.
#[allow(clippy::too_many_arguments)]
pub fn make_convection_diffusion(
    c: f64,
    d: f64,
    a_low: f64,
    a_high: f64,
    k_low: f64,
    k_high: f64,
) -> PdeProblem {
    let wave = move |x: &[f64], a: f64, k: f64| a * (-d * k * k * x[0]).exp() * (k * (x[1] - c * x[0])).sin();
    let exact = move |x: &[f64]| wave(x, a_low, k_low) + wave(x, a_high, k_high);
    let exact_jet = move |x: &[f64]| {
        let term = |a: f64, k: f64| {
            let t = Jet2::var(x[0], 0, 2);
            let s = Jet2::var(x[1], 1, 2);
            let damp = t.scale(-d * k * k).exp();
            let phase = s.sub(&t.scale(c)).scale(k).sin();
            damp.mul(&phase).scale(a)
        };
        term(a_low, k_low).add(&term(a_high, k_high))
    };
    let initial = move |x: &[f64]| a_low * (k_low * x[1]).sin() + a_high * (k_high * x[1]).sin();
    PdeProblem {
        name: format!("convection_diffusion_klow_{k_low}_khigh_{k_high}"),
        dim: 2,
        domain: vec![(0.0, 1.0), (0.0, 1.0)],
        interior: InteriorOp::Linear(LinearOperatorSpec {
            terms: vec![(Deriv::First(0), 1.0), (Deriv::First(1), c), (Deriv::Second(1), -d)],
        }),
        boundary: vec![
            BoundaryDescriptor::Face {
                axis: 0,
                at_hi: false,
                kind: BcKind::Initial,
                target: Box::new(initial),
            },
            BoundaryDescriptor::PeriodicPair { axis: 1, order: 0 },
            BoundaryDescriptor::PeriodicPair { axis: 1, order: 1 },
        ],
        source: Box::new(|_: &[f64]| 0.0),
        exact: Some(Box::new(exact)),
        exact_jet: Some(Box::new(exact_jet)),
    }
}

/// Viscous Burgers u_t + u u_x = nu u_xx on (t, x) in [0,1] x [-1,1],
/// u(0, x) = -sin(pi x), u(t, +-1) = 0. No closed form; evaluation goes
/// against a stored reference grid.
pub fn make_burgers(nu: f64) -> PdeProblem {
    PdeProblem {
        name: format!("burgers_nu_{nu}"),
        dim: 2,
        domain: vec![(0.0, 1.0), (-1.0, 1.0)],
        interior: InteriorOp::Burgers { nu },
        boundary: vec![
            BoundaryDescriptor::Face {
                axis: 0,
                at_hi: false,
                kind: BcKind::Initial,
                target: Box::new(|x: &[f64]| -(PI * x[1]).sin()),
            },
            BoundaryDescriptor::Face {
                axis: 1,
                at_hi: false,
                kind: BcKind::Dirichlet,
                target: Box::new(|_: &[f64]| 0.0),
            },
            BoundaryDescriptor::Face {
                axis: 1,
                at_hi: true,
                kind: BcKind::Dirichlet,
                target: Box::new(|_: &[f64]| 0.0),
            },
        ],
        source: Box::new(|_: &[f64]| 0.0),
        exact: None,
        exact_jet: None,
    }
}

/// The spectrum-analysis problem: u_t + u_x = 0 on [0,1] x [0,1] with exact
/// solution a superposition of sinusoids, sum_i A_i sin(2 pi f_i (x - t)).
/// Data faces are x = 0, x = 1 and t = 1, targeted from the exact solution.
pub fn make_multiscale_convection(frequencies: &[f64], amplitudes: &[f64]) -> PdeProblem {
    assert_eq!(frequencies.len(), amplitudes.len());
    let fs: Vec<f64> = frequencies.to_vec();
    let amps: Vec<f64> = amplitudes.to_vec();
    let exact = {
        let (fs, amps) = (fs.clone(), amps.clone());
        move |x: &[f64]| -> f64 {
            fs.iter()
                .zip(&amps)
                .map(|(f, a)| a * (2.0 * PI * f * (x[1] - x[0])).sin())
                .sum()
        }
    };
    let exact_jet = {
        let (fs, amps) = (fs.clone(), amps.clone());
        move |x: &[f64]| -> Jet2 {
            let mut acc = Jet2::constant(0.0, 2);
            for (f, a) in fs.iter().zip(&amps) {
                let t = Jet2::var(x[0], 0, 2);
                let s = Jet2::var(x[1], 1, 2);
                acc = acc.add(&s.sub(&t).scale(2.0 * PI * f).sin().scale(*a));
            }
            acc
        }
    };
    let faces = [(1usize, false), (1usize, true), (0usize, true)];
    let boundary = faces
        .into_iter()
        .map(|(axis, at_hi)| {
            let (fs, amps) = (fs.clone(), amps.clone());
            BoundaryDescriptor::Face {
                axis,
                at_hi,
                kind: BcKind::Dirichlet,
                target: Box::new(move |x: &[f64]| {
                    fs.iter()
                        .zip(&amps)
                        .map(|(f, a)| a * (2.0 * PI * f * (x[1] - x[0])).sin())
                        .sum()
                }),
            }
        })
        .collect();
    PdeProblem {
        name: "multiscale_convection".to_string(),
        dim: 2,
        domain: vec![(0.0, 1.0), (0.0, 1.0)],
        interior: InteriorOp::Linear(LinearOperatorSpec {
            terms: vec![(Deriv::First(0), 1.0), (Deriv::First(1), 1.0)],
        }),
        boundary,
        source: Box::new(|_: &[f64]| 0.0),
        exact: Some(Box::new(exact)),
        exact_jet: Some(Box::new(exact_jet)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helmholtz_exact_zeros() {
        let p = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
        let e = p.exact.as_ref().unwrap();
        // sin(0.5 pi) * sin(2 pi) = 0.
        assert!(e(&[0.5, 0.5]).abs() < 1e-12);
    }

    #[test]
    fn convection_exact_zero_at_pi() {
        let p = make_convection(50.0);
        let e = p.exact.as_ref().unwrap();
        assert!(e(&[0.0, PI]).abs() < 1e-12);
    }

    #[test]
    fn convection_diffusion_initial_matches_exact() {
        let p = make_convection_diffusion(1.0, 5e-5, 1.0, 0.1, 4.0 * PI, 60.0 * PI);
        let e = p.exact.as_ref().unwrap();
        let init = match &p.boundary[0] {
            BoundaryDescriptor::Face { target, .. } => target,
            _ => unreachable!(),
        };
        for k in 0..50 {
            let x = [0.0, k as f64 / 49.0];
            assert!((e(&x) - init(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn burgers_initial_and_walls() {
        let p = make_burgers(0.01 / PI);
        let init = match &p.boundary[0] {
            BoundaryDescriptor::Face { target, .. } => target,
            _ => unreachable!(),
        };
        assert_eq!(init(&[0.0, 0.0]), 0.0);
        for b in &p.boundary[1..] {
            let target = match b {
                BoundaryDescriptor::Face { target, .. } => target,
                _ => unreachable!(),
            };
            assert_eq!(target(&[0.3, 1.0]), 0.0);
        }
    }

    #[test]
    fn required_order_per_problem() {
        assert_eq!(make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]).required_order(), 2);
        assert_eq!(make_convection(50.0).required_order(), 1);
        assert_eq!(
            make_convection_diffusion(1.0, 5e-5, 1.0, 0.1, 4.0 * PI, 60.0 * PI).required_order(),
            2
        );
        assert_eq!(make_burgers(0.01 / PI).required_order(), 2);
    }
}
