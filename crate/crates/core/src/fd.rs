//! Central finite differences. These are the independent oracles the
//! derivative engine is checked against; they only ever consume value-level
//! evaluations.

/// df/dx_i by central differences.
pub fn central_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// d²f/dx_i² by second-order central differences.
pub fn central_diag2(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[i] += h;
    xm[i] -= h;
    (f(&xp) - 2.0 * f(x) + f(&xm)) / (h * h)
}

/// Gradient of `f` over a flat parameter vector by central differences.
pub fn central_grad_vec(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|i| central_grad(f, x, i, h)).collect()
}

/// |a - b| <= tol * (1 + |b|); the guard keeps the comparison meaningful
/// around zero.
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

/// Worst relative deviation between two vectors under the same guard.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / (1.0 + y.abs()))
        .fold(0.0, f64::max)
}
