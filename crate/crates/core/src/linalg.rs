//! Dense symmetric positive-definite linear algebra: blocked Cholesky
//! factorization and triangular solves. Kept in-house so the solver path is
//! fully deterministic and dependency-light; the blocked trailing update goes
//! through ndarray's GEMM, which is where the flops are.

use crate::error::{IfefError, Result};
use ndarray::{s, Array1, Array2, ArrayView2};

const BLOCK: usize = 96;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct CholeskyFactor {
    l: Array2<f64>,
    /// Smallest diagonal pivot encountered (before the square root).
    pub min_pivot: f64,
}

/// Factor `a = L Lᵀ`. Fails with the offending pivot if `a` is not
/// numerically positive definite. Only the lower triangle of `a` is read.
pub fn cholesky(a: ArrayView2<f64>) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(IfefError::config(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = a.to_owned();
    let mut min_pivot = f64::INFINITY;

    let mut k = 0;
    while k < n {
        let kb = BLOCK.min(n - k);

        // Unblocked factorization of the diagonal block.
        for j in k..k + kb {
            let mut d = l[[j, j]];
            for t in k..j {
                d -= l[[j, t]] * l[[j, t]];
            }
            if d < min_pivot {
                min_pivot = d;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(IfefError::Singular { pivot: d });
            }
            let dj = d.sqrt();
            l[[j, j]] = dj;
            for i in j + 1..k + kb {
                let mut v = l[[i, j]];
                for t in k..j {
                    v -= l[[i, t]] * l[[j, t]];
                }
                l[[i, j]] = v / dj;
            }
        }

        let panel_top = k + kb;
        if panel_top < n {
            // Panel solve: L[p.., k..k+kb] <- L[p.., k..k+kb] * L_kk^{-T}.
            for j in k..k + kb {
                let djj = l[[j, j]];
                for i in panel_top..n {
                    let mut v = l[[i, j]];
                    for t in k..j {
                        v -= l[[i, t]] * l[[j, t]];
                    }
                    l[[i, j]] = v / djj;
                }
            }
            // Trailing update, block column at a time so only the lower
            // trapezoid is touched: A[j.., j..j+jb] -= P[j-pt..] P[j-pt..j+jb-pt]ᵀ.
            let panel = l.slice(s![panel_top..n, k..k + kb]).to_owned();
            let mut j = panel_top;
            while j < n {
                let jb = BLOCK.min(n - j);
                let left = panel.slice(s![j - panel_top.., ..]);
                let right = panel.slice(s![j - panel_top..j + jb - panel_top, ..]);
                let update = left.dot(&right.t());
                let mut target = l.slice_mut(s![j..n, j..j + jb]);
                target -= &update;
                j += jb;
            }
        }
        k += kb;
    }

    // Zero the strict upper triangle so the factor is clean to inspect.
    for i in 0..n {
        for j in i + 1..n {
            l[[i, j]] = 0.0;
        }
    }
    Ok(CholeskyFactor { l, min_pivot })
}

impl CholeskyFactor {
    /// Solve `L Lᵀ x = b`.
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.l.nrows();
        let mut x = b.clone();
        // Forward: L y = b.
        for i in 0..n {
            let mut v = x[i];
            for j in 0..i {
                v -= self.l[[i, j]] * x[j];
            }
            x[i] = v / self.l[[i, i]];
        }
        // Backward: Lᵀ x = y.
        for i in (0..n).rev() {
            let mut v = x[i];
            for j in i + 1..n {
                v -= self.l[[j, i]] * x[j];
            }
            x[i] = v / self.l[[i, i]];
        }
        x
    }

    pub fn factor(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }
}

/// Force exact symmetry: (a + aᵀ)/2 in place.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}
