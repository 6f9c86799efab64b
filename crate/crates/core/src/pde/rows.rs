//! From points to design rows: every linear operator or boundary condition
//! applied to the basis jets yields one row that is linear in the readout
//! coefficients.

use super::{BoundarySample, InteriorOp, LinearOperatorSpec, PdeProblem};
use crate::diff::{Jet2, JetBatch};
use crate::error::{IfefError, Result};
use crate::features::FeatureBasis;
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Apply a linear operator to the jets of every basis component.
fn apply_linear_batch(op: &LinearOperatorSpec, jets: &JetBatch) -> Array1<f64> {
    let mut row = Array1::<f64>::zeros(jets.len());
    for (d, coeff) in &op.terms {
        match d {
            super::Deriv::Value => row.scaled_add(*coeff, &jets.value),
            super::Deriv::First(i) => row.scaled_add(*coeff, &jets.grad.column(*i)),
            super::Deriv::Second(i) => row.scaled_add(*coeff, &jets.diag2.column(*i)),
        }
    }
    row
}

/// The same operator applied to the jet of a scalar function (used by the
/// suite's self-consistency checks).
pub fn apply_linear_jet(op: &LinearOperatorSpec, jet: &Jet2) -> f64 {
    op.terms
        .iter()
        .map(|(d, coeff)| {
            coeff
                * match d {
                    super::Deriv::Value => jet.value,
                    super::Deriv::First(i) => jet.grad[*i],
                    super::Deriv::Second(i) => jet.diag2[*i],
                }
        })
        .sum()
}

/// Burgers residual u_t + u u_x - nu u_xx of a scalar jet, axes (t, x).
pub fn burgers_residual_jet(nu: f64, jet: &Jet2) -> f64 {
    jet.grad[0] + jet.value * jet.grad[1] - nu * jet.diag2[1]
}

/// One interior row: coefficients of the residual operator applied to every
/// basis component, plus the source value. Nonlinear problems have no linear
/// row; ask for the Burgers design instead.
pub fn residual_row(
    problem: &PdeProblem,
    basis: &FeatureBasis,
    x: &[f64],
) -> Result<(Array1<f64>, f64)> {
    match &problem.interior {
        InteriorOp::Linear(op) => {
            let jets = basis.psi_batch(x, problem.required_order())?;
            Ok((apply_linear_batch(op, &jets), (problem.source)(x)))
        }
        InteriorOp::Burgers { .. } => Err(IfefError::config(
            "nonlinear interior operator has no linear residual row; use the Burgers design",
        )),
    }
}

/// One boundary row from a tagged sample.
pub fn boundary_row(
    problem: &PdeProblem,
    basis: &FeatureBasis,
    sample: &BoundarySample,
) -> Result<(Array1<f64>, f64)> {
    let order = problem.required_order();
    match sample {
        BoundarySample::Point { x, target, .. } => {
            Ok((basis.psi_values(x)?, *target))
        }
        BoundarySample::Pair { a, b, axis, order: pair_order } => {
            match pair_order {
                0 => {
                    let va = basis.psi_values(a)?;
                    let vb = basis.psi_values(b)?;
                    Ok((va - vb, 0.0))
                }
                1 => {
                    let ja = basis.psi_batch(a, order.max(1))?;
                    let jb = basis.psi_batch(b, order.max(1))?;
                    let row = &ja.grad.column(*axis) - &jb.grad.column(*axis);
                    Ok((row.to_owned(), 0.0))
                }
                o => Err(IfefError::config(format!("periodic pair order {o} unsupported"))),
            }
        }
    }
}

/// Dense design matrices of one problem/basis/collocation triple.
pub struct DesignMatrices {
    pub b_u: Array2<f64>,
    pub g_u: Array1<f64>,
    pub r_f: Array2<f64>,
    pub f_f: Array1<f64>,
}

const ROW_CHUNK: usize = 64;

/// Assemble all rows (parallel over points, written into place so the result
/// is deterministic).
pub fn build_design(
    problem: &PdeProblem,
    basis: &FeatureBasis,
    colloc: &super::CollocationSet,
) -> Result<DesignMatrices> {
    if !problem.interior.is_linear() {
        return Err(IfefError::config("build_design requires a linear interior operator"));
    }
    let f = basis.feature_dim();
    let n_u = colloc.n_u();
    let n_f = colloc.n_f();

    let mut b_u = Array2::<f64>::zeros((n_u, f));
    let mut g_u = Array1::<f64>::zeros(n_u);
    {
        let mut rows: Vec<_> = b_u.outer_iter_mut().collect();
        let targets: Vec<&mut f64> = g_u.iter_mut().collect();
        rows.par_chunks_mut(ROW_CHUNK)
            .zip(targets.into_par_iter().chunks(ROW_CHUNK))
            .enumerate()
            .try_for_each(|(ci, (row_chunk, mut tgt_chunk))| -> Result<()> {
                for (j, row) in row_chunk.iter_mut().enumerate() {
                    let idx = ci * ROW_CHUNK + j;
                    let (r, t) = boundary_row(problem, basis, &colloc.boundary[idx])
                        .map_err(|e| tag_index(e, idx))?;
                    row.assign(&r);
                    *tgt_chunk[j] = t;
                }
                Ok(())
            })?;
    }

    let mut r_f = Array2::<f64>::zeros((n_f, f));
    let mut f_f = Array1::<f64>::zeros(n_f);
    {
        let mut rows: Vec<_> = r_f.outer_iter_mut().collect();
        let targets: Vec<&mut f64> = f_f.iter_mut().collect();
        rows.par_chunks_mut(ROW_CHUNK)
            .zip(targets.into_par_iter().chunks(ROW_CHUNK))
            .enumerate()
            .try_for_each(|(ci, (row_chunk, mut tgt_chunk))| -> Result<()> {
                for (j, row) in row_chunk.iter_mut().enumerate() {
                    let idx = ci * ROW_CHUNK + j;
                    let (r, t) = residual_row(problem, basis, &colloc.interior[idx])
                        .map_err(|e| tag_index(e, idx))?;
                    row.assign(&r);
                    *tgt_chunk[j] = t;
                }
                Ok(())
            })?;
    }

    Ok(DesignMatrices { b_u, g_u, r_f, f_f })
}

fn tag_index(e: IfefError, idx: usize) -> IfefError {
    match e {
        IfefError::Numeric { index: None, msg } => IfefError::Numeric { index: Some(idx), msg },
        other => other,
    }
}

/// Precomputed jet rows for the nonlinear Burgers lower problem: boundary
/// rows stay linear, interior rows keep every jet channel so the residual
/// u_t + u u_x - nu u_xx can be re-evaluated at any theta.
pub struct BurgersDesign {
    pub b_u: Array2<f64>,
    pub g_u: Array1<f64>,
    pub val: Array2<f64>,
    pub d_t: Array2<f64>,
    pub d_x: Array2<f64>,
    pub d_xx: Array2<f64>,
    pub f_f: Array1<f64>,
    pub nu: f64,
}

pub fn build_burgers_design(
    problem: &PdeProblem,
    basis: &FeatureBasis,
    colloc: &super::CollocationSet,
) -> Result<BurgersDesign> {
    let nu = match &problem.interior {
        InteriorOp::Burgers { nu } => *nu,
        _ => return Err(IfefError::config("build_burgers_design needs the Burgers operator")),
    };
    let f = basis.feature_dim();
    let n_u = colloc.n_u();
    let n_f = colloc.n_f();

    let mut b_u = Array2::<f64>::zeros((n_u, f));
    let mut g_u = Array1::<f64>::zeros(n_u);
    for (i, s) in colloc.boundary.iter().enumerate() {
        let (row, t) = boundary_row(problem, basis, s)?;
        b_u.row_mut(i).assign(&row);
        g_u[i] = t;
    }

    let mut val = Array2::<f64>::zeros((n_f, f));
    let mut d_t = Array2::<f64>::zeros((n_f, f));
    let mut d_x = Array2::<f64>::zeros((n_f, f));
    let mut d_xx = Array2::<f64>::zeros((n_f, f));
    let mut f_f = Array1::<f64>::zeros(n_f);
    let jets: Vec<Result<JetBatch>> = colloc
        .interior
        .par_iter()
        .map(|x| basis.psi_batch(x, 2))
        .collect();
    for (i, jb) in jets.into_iter().enumerate() {
        let jb = jb.map_err(|e| tag_index(e, i))?;
        val.row_mut(i).assign(&jb.value);
        d_t.row_mut(i).assign(&jb.grad.column(0));
        d_x.row_mut(i).assign(&jb.grad.column(1));
        d_xx.row_mut(i).assign(&jb.diag2.column(1));
        f_f[i] = (problem.source)(&colloc.interior[i]);
    }

    Ok(BurgersDesign { b_u, g_u, val, d_t, d_x, d_xx, f_f, nu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_rff, Extension};
    use crate::pde::{
        make_convection, make_helmholtz, sample_uniform, BcKind, Deriv, GridSpec,
    };
    use crate::diff::NetworkParams;
    use crate::fd;

    fn basis(seed: u64) -> FeatureBasis {
        let params = NetworkParams::glorot(&[2, 8, 6], false, seed).unwrap();
        FeatureBasis::new(params, Extension::Rff(sample_rff(5, 6, 1.0, seed + 1).unwrap()))
            .unwrap()
    }

    #[test]
    fn identity_operator_row_equals_psi() {
        let p = PdeProblem {
            name: "identity".into(),
            dim: 2,
            domain: vec![(0.0, 1.0), (0.0, 1.0)],
            interior: InteriorOp::Linear(LinearOperatorSpec {
                terms: vec![(Deriv::Value, 1.0)],
            }),
            boundary: vec![],
            source: Box::new(|_| 0.0),
            exact: None,
            exact_jet: None,
        };
        let b = basis(3);
        let x = [0.3, 0.6];
        let (row, _) = residual_row(&p, &b, &x).unwrap();
        let psi = b.psi_values(&x).unwrap();
        assert!(row.iter().zip(psi.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn helmholtz_row_matches_finite_differences() {
        let p = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
        let b = basis(5);
        let x = [0.21, -0.47];
        let (row, _) = residual_row(&p, &b, &x).unwrap();
        for k in 0..b.feature_dim() {
            let f = |y: &[f64]| b.psi_values(y).unwrap()[k];
            let want = fd::central_diag2(&f, &x, 0, 1e-4)
                + fd::central_diag2(&f, &x, 1, 1e-4)
                + f(&x);
            assert!(
                fd::close_rel(row[k], want, 1e-4),
                "k={k}: row {} vs fd {want}",
                row[k]
            );
        }
    }

    #[test]
    fn row_is_linear_in_theta() {
        // Dotting the row with theta equals applying the operator to the
        // predictor directly.
        let p = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
        let b = basis(7);
        let x = [0.1, 0.2];
        let (row, _) = residual_row(&p, &b, &x).unwrap();
        let theta = Array1::from_shape_fn(b.feature_dim(), |k| {
            crate::rng::gaussian(2, k as u64)
        });
        let jets = b.psi_batch(&x, 2).unwrap();
        let mut direct = 0.0;
        for k in 0..b.feature_dim() {
            let jet = jets.jet(k);
            direct += theta[k] * (jet.diag2[0] + jet.diag2[1] + jet.value);
        }
        assert!((row.dot(&theta) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn degenerate_pair_gives_zero_row() {
        let p = make_convection(50.0);
        let b = basis(9);
        let sample = BoundarySample::Pair {
            a: vec![0.4, 1.0],
            b: vec![0.4, 1.0],
            axis: 1,
            order: 0,
        };
        let (row, t) = boundary_row(&p, &b, &sample).unwrap();
        assert_eq!(t, 0.0);
        assert!(row.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dirichlet_and_initial_targets() {
        let p = make_convection(50.0);
        let b = basis(11);
        let set = sample_uniform(&p, &GridSpec { interior: vec![5, 5], boundary_total: 24 }, 0)
            .unwrap();
        for s in &set.boundary {
            if let BoundarySample::Point { x, target, kind } = s {
                assert_eq!(*kind, BcKind::Initial);
                assert!((target - x[1].sin()).abs() < 1e-12);
                let (_, t) = boundary_row(&p, &b, s).unwrap();
                assert_eq!(t, *target);
            }
        }
    }

    #[test]
    fn design_dimensions() {
        let p = make_convection(50.0);
        let b = basis(13);
        let set = sample_uniform(&p, &GridSpec { interior: vec![7, 7], boundary_total: 20 }, 0)
            .unwrap();
        let d = build_design(&p, &b, &set).unwrap();
        assert_eq!(d.b_u.dim(), (20, b.feature_dim()));
        assert_eq!(d.r_f.dim(), (49, b.feature_dim()));
        assert_eq!(d.g_u.len(), 20);
        assert_eq!(d.f_f.len(), 49);
    }
}
