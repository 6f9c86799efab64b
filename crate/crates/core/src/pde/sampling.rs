//! Collocation samplers: tensor-product grids and Latin hypercube sets.
//! Boundary budgets split across the problem's faces proportionally to face
//! measure (largest-remainder rounding, every face keeps at least one point);
//! a periodic pair consumes one unit of budget and yields one row.

use super::{BoundaryDescriptor, BoundarySample, CollocationSet, PdeProblem};
use crate::error::{IfefError, Result};
use rand::Rng;

/// Tensor-grid sampler specification: interior points per axis plus the total
/// boundary budget.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub interior: Vec<usize>,
    pub boundary_total: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Measure of the face obtained by fixing `axis` (2-D: the extent of the
/// free axis).
fn face_measure(problem: &PdeProblem, axis: usize) -> f64 {
    problem
        .domain
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != axis)
        .map(|(_, (lo, hi))| hi - lo)
        .product()
}

fn split_budget(problem: &PdeProblem, total: usize) -> Result<Vec<usize>> {
    let measures: Vec<f64> = problem
        .boundary
        .iter()
        .map(|b| match b {
            BoundaryDescriptor::Face { axis, .. } => face_measure(problem, *axis),
            BoundaryDescriptor::PeriodicPair { axis, .. } => face_measure(problem, *axis),
        })
        .collect();
    let m: f64 = measures.iter().sum();
    if total < measures.len() {
        return Err(IfefError::config(format!(
            "boundary budget {} smaller than the number of conditions {}",
            total,
            measures.len()
        )));
    }
    // Largest-remainder apportionment with a floor of one point per face.
    let mut counts: Vec<usize> = measures.iter().map(|w| ((w / m) * total as f64) as usize).collect();
    for c in counts.iter_mut() {
        *c = (*c).max(1);
    }
    let mut assigned: usize = counts.iter().sum();
    let mut fracs: Vec<(usize, f64)> = measures
        .iter()
        .enumerate()
        .map(|(i, w)| (i, (w / m) * total as f64 - counts[i] as f64))
        .collect();
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let mut k = 0;
    while assigned < total {
        counts[fracs[k % fracs.len()].0] += 1;
        assigned += 1;
        k += 1;
    }
    while assigned > total {
        // Only possible when floors were applied; trim the largest count.
        let i = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
        if counts[i] > 1 {
            counts[i] -= 1;
            assigned -= 1;
        } else {
            break;
        }
    }
    Ok(counts)
}

fn face_point(problem: &PdeProblem, axis: usize, at_hi: bool, free_value: f64) -> Vec<f64> {
    let mut x = vec![0.0; problem.dim];
    for (i, (lo, hi)) in problem.domain.iter().enumerate() {
        if i == axis {
            x[i] = if at_hi { *hi } else { *lo };
        } else {
            x[i] = free_value.clamp(*lo, *hi);
        }
    }
    x
}

// 2-D only: the axis that is not fixed.
fn free_axis(axis: usize) -> usize {
    if axis == 0 {
        1
    } else {
        0
    }
}

fn boundary_samples(
    problem: &PdeProblem,
    counts: &[usize],
    mut draw: impl FnMut(usize, f64, f64) -> Vec<f64>,
) -> Vec<BoundarySample> {
    let mut out = Vec::new();
    for (desc, &count) in problem.boundary.iter().zip(counts) {
        match desc {
            BoundaryDescriptor::Face { axis, at_hi, kind, target } => {
                let free = free_axis(*axis);
                let (lo, hi) = problem.domain[free];
                for v in draw(count, lo, hi) {
                    let x = face_point(problem, *axis, *at_hi, v);
                    let g = target(&x);
                    out.push(BoundarySample::Point { x, target: g, kind: *kind });
                }
            }
            BoundaryDescriptor::PeriodicPair { axis, order } => {
                let free = free_axis(*axis);
                let (lo, hi) = problem.domain[free];
                for v in draw(count, lo, hi) {
                    let a = face_point(problem, *axis, false, v);
                    let b = face_point(problem, *axis, true, v);
                    out.push(BoundarySample::Pair { a, b, axis: *axis, order: *order });
                }
            }
        }
    }
    out
}

/// Tensor-product interior grid (inclusive of the domain edges, matching the
/// usual uniform benchmark setups) plus evenly spaced boundary points.
pub fn sample_uniform(problem: &PdeProblem, grid: &GridSpec, seed: u64) -> Result<CollocationSet> {
    if grid.interior.len() != problem.dim {
        return Err(IfefError::config(format!(
            "grid spec has {} axes, problem has {}",
            grid.interior.len(),
            problem.dim
        )));
    }
    if grid.interior.iter().any(|&n| n == 0) || grid.boundary_total == 0 {
        return Err(IfefError::config("grid counts must be at least one"));
    }
    let axes: Vec<Vec<f64>> = problem
        .domain
        .iter()
        .zip(&grid.interior)
        .map(|((lo, hi), &n)| linspace(*lo, *hi, n))
        .collect();
    let mut interior = Vec::with_capacity(axes.iter().map(|a| a.len()).product());
    match problem.dim {
        2 => {
            for &u in &axes[0] {
                for &v in &axes[1] {
                    interior.push(vec![u, v]);
                }
            }
        }
        d => return Err(IfefError::config(format!("uniform sampler supports 2-D, got {d}"))),
    }

    let counts = split_budget(problem, grid.boundary_total)?;
    let boundary = boundary_samples(problem, &counts, |n, lo, hi| linspace(lo, hi, n));
    Ok(CollocationSet { boundary, interior, seed })
}

/// Latin hypercube sampler: each axis is split into `n_f` bins with exactly
/// one sample per bin (independent random permutations per axis); boundary
/// faces are stratified the same way along their free axis.
pub fn sample_lhs(problem: &PdeProblem, n_u: usize, n_f: usize, seed: u64) -> Result<CollocationSet> {
    if n_u == 0 || n_f == 0 {
        return Err(IfefError::config("collocation counts must be at least one"));
    }
    if problem.dim != 2 {
        return Err(IfefError::config("lhs sampler supports 2-D problems"));
    }
    let mut rng = crate::rng::chacha(seed);

    let lhs_axis = |n: usize, lo: f64, hi: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        perm.into_iter()
            .map(|bin| {
                let u: f64 = rng.gen_range(0.0..1.0);
                lo + (hi - lo) * (bin as f64 + u) / n as f64
            })
            .collect()
    };

    let cols: Vec<Vec<f64>> = problem
        .domain
        .iter()
        .map(|(lo, hi)| lhs_axis(n_f, *lo, *hi, &mut rng))
        .collect();
    let interior: Vec<Vec<f64>> = (0..n_f).map(|i| vec![cols[0][i], cols[1][i]]).collect();

    let counts = split_budget(problem, n_u)?;
    let boundary = boundary_samples(problem, &counts, |n, lo, hi| lhs_axis(n, lo, hi, &mut rng));
    Ok(CollocationSet { boundary, interior, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::{make_burgers, make_convection, make_helmholtz};

    #[test]
    fn uniform_grid_counts_match_spec() {
        let p = make_convection(50.0);
        let set =
            sample_uniform(&p, &GridSpec { interior: vec![51, 51], boundary_total: 204 }, 0)
                .unwrap();
        assert_eq!(set.n_f(), 51 * 51);
        assert_eq!(set.n_u(), 204);
        // Everything lies in the closure.
        for x in &set.interior {
            assert!(p.contains(x));
        }
    }

    #[test]
    fn helmholtz_faces_split_evenly() {
        let p = make_helmholtz(1.0, 4.0, [(-1.0, 1.0), (-1.0, 1.0)]);
        let set =
            sample_uniform(&p, &GridSpec { interior: vec![11, 11], boundary_total: 100 }, 0)
                .unwrap();
        // Samples come out in descriptor order; equal measures give 25 each.
        assert_eq!(set.n_u(), 100);
        let expect = [(-1.0, 0usize), (1.0, 0), (-1.0, 1), (1.0, 1)];
        for (face, &(value, axis)) in expect.iter().enumerate() {
            for k in 0..25 {
                match &set.boundary[face * 25 + k] {
                    BoundarySample::Point { x, .. } => assert_eq!(x[axis], value),
                    other => panic!("unexpected sample {other:?}"),
                }
            }
        }
    }

    #[test]
    fn lhs_stratifies_each_axis() {
        let p = make_burgers(0.01 / std::f64::consts::PI);
        let n = 64;
        let set = sample_lhs(&p, 10, n, 3).unwrap();
        for axis in 0..2 {
            let (lo, hi) = p.domain[axis];
            let mut seen = vec![false; n];
            for x in &set.interior {
                let bin = (((x[axis] - lo) / (hi - lo)) * n as f64).floor() as usize;
                assert!(!seen[bin.min(n - 1)], "axis {axis} bin {bin} hit twice");
                seen[bin.min(n - 1)] = true;
            }
            assert!(seen.iter().all(|&b| b));
        }
    }

    #[test]
    fn lhs_is_deterministic_per_seed() {
        let p = make_burgers(0.01 / std::f64::consts::PI);
        let a = sample_lhs(&p, 100, 500, 9).unwrap();
        let b = sample_lhs(&p, 100, 500, 9).unwrap();
        assert_eq!(a.interior, b.interior);
        let c = sample_lhs(&p, 100, 500, 10).unwrap();
        assert_ne!(a.interior, c.interior);
    }

    #[test]
    fn pair_points_sit_on_opposite_faces() {
        let p = make_convection(50.0);
        let set =
            sample_uniform(&p, &GridSpec { interior: vec![5, 5], boundary_total: 20 }, 0).unwrap();
        let mut pairs = 0;
        for s in &set.boundary {
            if let BoundarySample::Pair { a, b, axis, order } = s {
                assert_eq!(*axis, 1);
                assert_eq!(*order, 0);
                assert_eq!(a[1], 0.0);
                assert!((b[1] - 2.0 * std::f64::consts::PI).abs() < 1e-12);
                assert_eq!(a[0], b[0]);
                pairs += 1;
            }
        }
        assert!(pairs > 0);
    }
}
