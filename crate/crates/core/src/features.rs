//! The extended basis: random Fourier features applied to the last hidden
//! layer, `psi(x) = (1/sqrt(D)) [cos(2*pi*B h(x)); sin(2*pi*B h(x))]`, with an
//! identity mode for the no-extension ablation.
//!
//! The feature matrix B is sampled entry-wise from a counter-based Gaussian
//! stream, so for a fixed (seed, sigma, p) the matrix for a smaller D is
//! exactly the leading rows of the matrix for a larger D.

use crate::diff::{Jet2, JetBatch, NetworkParams, Tape};
use crate::error::{IfefError, Result};
use crate::rng;
use ndarray::{Array1, Array2};
use std::f64::consts::TAU;

/// Frequency matrix of the Fourier extension. Immutable after sampling.
#[derive(Debug, Clone)]
pub struct RffMatrix {
    b: Array2<f64>,
    pub sigma: f64,
    pub seed: u64,
}

/// Entries i.i.d. N(0, sigma^2), keyed by (seed, row, col) so matrices nest
/// across D for equal seed/sigma/p.
pub fn sample_rff(d: usize, p: usize, sigma: f64, seed: u64) -> Result<RffMatrix> {
    if d == 0 || p == 0 {
        return Err(IfefError::config(format!("rff dimensions must be positive, got D={d}, p={p}")));
    }
    if !(sigma > 0.0) {
        return Err(IfefError::config(format!("rff sigma must be positive, got {sigma}")));
    }
    let b = Array2::from_shape_fn((d, p), |(i, j)| {
        sigma * rng::gaussian(seed, (i * p + j) as u64)
    });
    Ok(RffMatrix { b, sigma, seed })
}

impl RffMatrix {
    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.b
    }
}

#[derive(Debug, Clone)]
pub enum Extension {
    /// Ablation mode: the basis is the raw hidden layer.
    None,
    Rff(RffMatrix),
}

/// Cached intermediates of one psi forward pass, enough to run the reverse
/// chain rule without re-evaluating trigonometry.
pub struct PsiTape {
    #[allow(dead_code)]
    z: Array1<f64>,
    zg: Array2<f64>,
    zs: Array2<f64>,
    cos: Array1<f64>,
    sin: Array1<f64>,
}

impl Extension {
    /// 2D with the extension, p (the hidden width) without.
    pub fn feature_dim(&self, hidden_width: usize) -> usize {
        match self {
            Extension::None => hidden_width,
            Extension::Rff(rff) => 2 * rff.d(),
        }
    }

    /// Forward psi jets from hidden jets, plus the tape for the reverse pass.
    /// In ablation mode the hidden jets pass through bit-exactly.
    pub fn forward(&self, hidden: &JetBatch) -> (JetBatch, Option<PsiTape>) {
        match self {
            Extension::None => (hidden.clone(), None),
            Extension::Rff(rff) => {
                let d = rff.d();
                let n = hidden.axes();
                let order = hidden.order;
                let scale = 1.0 / (d as f64).sqrt();

                let z = rff.b.dot(&hidden.value) * TAU;
                let zg = if order >= 1 { rff.b.dot(&hidden.grad) * TAU } else { Array2::zeros((d, n)) };
                let zs = if order >= 2 { rff.b.dot(&hidden.diag2) * TAU } else { Array2::zeros((d, n)) };
                let cos = z.mapv(f64::cos);
                let sin = z.mapv(f64::sin);

                let mut out = JetBatch::zeros(2 * d, n, order);
                for k in 0..d {
                    out.value[k] = scale * cos[k];
                    out.value[d + k] = scale * sin[k];
                    if order >= 1 {
                        for i in 0..n {
                            let g = zg[[k, i]];
                            out.grad[[k, i]] = -scale * sin[k] * g;
                            out.grad[[d + k, i]] = scale * cos[k] * g;
                        }
                    }
                    if order >= 2 {
                        for i in 0..n {
                            let g = zg[[k, i]];
                            let s2 = zs[[k, i]];
                            out.diag2[[k, i]] = -scale * (cos[k] * g * g + sin[k] * s2);
                            out.diag2[[d + k, i]] = scale * (cos[k] * s2 - sin[k] * g * g);
                        }
                    }
                }
                (out, Some(PsiTape { z, zg, zs, cos, sin }))
            }
        }
    }

    /// Reverse pass: adjoints of psi-jet components back to adjoints of the
    /// hidden jets. `psi_adj` levels beyond `order` must be zero.
    pub fn backward(&self, tape: Option<&PsiTape>, psi_adj: &JetBatch, order: u8) -> JetBatch {
        match (self, tape) {
            (Extension::None, _) => psi_adj.clone(),
            (Extension::Rff(rff), Some(t)) => {
                let d = rff.d();
                let n = psi_adj.axes();
                let scale = 1.0 / (d as f64).sqrt();

                let mut zv_adj = Array1::<f64>::zeros(d);
                let mut zg_adj = Array2::<f64>::zeros((d, n));
                let mut zs_adj = Array2::<f64>::zeros((d, n));
                for k in 0..d {
                    let (c, s) = (t.cos[k], t.sin[k]);
                    let mut acc = psi_adj.value[k] * (-scale * s) + psi_adj.value[d + k] * (scale * c);
                    if order >= 1 {
                        for i in 0..n {
                            let g = t.zg[[k, i]];
                            let cg = psi_adj.grad[[k, i]];
                            let sg = psi_adj.grad[[d + k, i]];
                            acc += cg * (-scale * c * g) + sg * (-scale * s * g);
                            zg_adj[[k, i]] = cg * (-scale * s) + sg * (scale * c);
                            if order >= 2 {
                                let s2 = t.zs[[k, i]];
                                let cs = psi_adj.diag2[[k, i]];
                                let ss = psi_adj.diag2[[d + k, i]];
                                acc += cs * (scale * (s * g * g - c * s2))
                                    + ss * (-scale * (c * g * g + s * s2));
                                zg_adj[[k, i]] += -2.0 * scale * g * (cs * c + ss * s);
                                zs_adj[[k, i]] = cs * (-scale * s) + ss * (scale * c);
                            }
                        }
                    }
                    zv_adj[k] = acc;
                }

                let bt = rff.b.t();
                let mut out = JetBatch::zeros(rff.p(), n, order);
                out.value = bt.dot(&zv_adj) * TAU;
                if order >= 1 {
                    out.grad = bt.dot(&zg_adj) * TAU;
                }
                if order >= 2 {
                    out.diag2 = bt.dot(&zs_adj) * TAU;
                }
                out
            }
            (Extension::Rff(_), None) => unreachable!("rff backward requires the forward tape"),
        }
    }

    /// Value-only map (evaluation grids).
    pub fn values(&self, hidden: &Array1<f64>) -> Array1<f64> {
        match self {
            Extension::None => hidden.clone(),
            Extension::Rff(rff) => {
                let d = rff.d();
                let scale = 1.0 / (d as f64).sqrt();
                let z = rff.b.dot(hidden) * TAU;
                let mut out = Array1::zeros(2 * d);
                for k in 0..d {
                    let (s, c) = z[k].sin_cos();
                    out[k] = scale * c;
                    out[d + k] = scale * s;
                }
                out
            }
        }
    }
}

/// Hidden network plus optional Fourier extension; the object whose jets span
/// the regression basis.
#[derive(Debug, Clone)]
pub struct FeatureBasis {
    pub params: NetworkParams,
    pub extension: Extension,
}

impl FeatureBasis {
    pub fn new(params: NetworkParams, extension: Extension) -> Result<Self> {
        if let Extension::Rff(rff) = &extension {
            if rff.p() != params.hidden_dim() {
                return Err(IfefError::config(format!(
                    "rff matrix has {} columns but hidden width is {}",
                    rff.p(),
                    params.hidden_dim()
                )));
            }
        }
        Ok(FeatureBasis { params, extension })
    }

    pub fn feature_dim(&self) -> usize {
        self.extension.feature_dim(self.params.hidden_dim())
    }

    /// Jets of every basis component at `x` (contract form).
    pub fn psi_jets(&self, x: &[f64], order: u8) -> Result<Vec<Jet2>> {
        let batch = self.psi_batch(x, order)?;
        Ok((0..batch.len()).map(|k| batch.jet(k)).collect())
    }

    /// Jet batch of the basis at `x`.
    pub fn psi_batch(&self, x: &[f64], order: u8) -> Result<JetBatch> {
        let tape = Tape::forward(&self.params, x, order)?;
        Ok(self.extension.forward(tape.output()).0)
    }

    /// Basis values only (evaluation grids).
    pub fn psi_values(&self, x: &[f64]) -> Result<Array1<f64>> {
        let hv = crate::diff::hidden_values(&self.params, x)?;
        Ok(self.extension.values(&hv))
    }

    /// Scalar prediction psi(x)' theta.
    pub fn predict(&self, x: &[f64], theta: &Array1<f64>) -> Result<f64> {
        Ok(self.psi_values(x)?.dot(theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;

    fn small_net(seed: u64) -> NetworkParams {
        NetworkParams::glorot(&[2, 6, 4], false, seed).unwrap()
    }

    #[test]
    fn sample_rff_is_deterministic() {
        let a = sample_rff(4, 2, 1.0, 42).unwrap();
        let b = sample_rff(4, 2, 1.0, 42).unwrap();
        assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn sample_rff_rejects_bad_config() {
        assert!(sample_rff(0, 2, 1.0, 0).is_err());
        assert!(sample_rff(4, 0, 1.0, 0).is_err());
        assert!(sample_rff(4, 2, 0.0, 0).is_err());
        assert!(sample_rff(4, 2, -1.0, 0).is_err());
    }

    #[test]
    fn matrices_nest_across_d() {
        let small = sample_rff(4, 2, 1.0, 7).unwrap();
        let large = sample_rff(8, 2, 1.0, 7).unwrap();
        for i in 0..4 {
            for j in 0..2 {
                assert_eq!(small.matrix()[[i, j]], large.matrix()[[i, j]]);
            }
        }
    }

    #[test]
    fn entry_moments_match_sigma() {
        let m = sample_rff(1000, 1000, 0.5, 3).unwrap();
        let n = (m.d() * m.p()) as f64;
        let mean = m.matrix().iter().sum::<f64>() / n;
        let var = m.matrix().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 5e-3 * 0.5, "mean {mean}");
        assert!((var.sqrt() - 0.5).abs() < 5e-3, "std {}", var.sqrt());
    }

    #[test]
    fn zero_hidden_gives_cos_one_sin_zero() {
        // Last layer weight and bias zero: h(x) = 0 identically.
        let mut params = small_net(0);
        let last = params.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        let basis =
            FeatureBasis::new(params, Extension::Rff(sample_rff(5, 4, 1.0, 1).unwrap())).unwrap();
        let psi = basis.psi_values(&[0.3, -0.7]).unwrap();
        let scale = 1.0 / 5f64.sqrt();
        for k in 0..5 {
            assert_eq!(psi[k], scale);
            assert_eq!(psi[5 + k], 0.0);
        }
    }

    #[test]
    fn psi_norm_is_one() {
        let basis =
            FeatureBasis::new(small_net(5), Extension::Rff(sample_rff(16, 4, 1.3, 9).unwrap()))
                .unwrap();
        for t in 0..20 {
            let x = [crate::rng::gaussian(11, 2 * t), crate::rng::gaussian(11, 2 * t + 1)];
            let psi = basis.psi_values(&x).unwrap();
            let norm2: f64 = psi.iter().map(|v| v * v).sum();
            assert!((norm2 - 1.0).abs() < 1e-14, "norm^2 {norm2}");
        }
    }

    #[test]
    fn ablation_mode_passes_hidden_through() {
        let params = small_net(2);
        let basis = FeatureBasis::new(params.clone(), Extension::None).unwrap();
        let x = [0.4, 0.9];
        let h = crate::diff::hidden_jets(&params, &x, 2).unwrap();
        let psi = basis.psi_jets(&x, 2).unwrap();
        assert_eq!(h, psi);
    }

    #[test]
    fn psi_jets_match_finite_differences() {
        let basis =
            FeatureBasis::new(small_net(8), Extension::Rff(sample_rff(6, 4, 1.0, 13).unwrap()))
                .unwrap();
        let x = [0.25, -0.4];
        let jets = basis.psi_jets(&x, 2).unwrap();
        for k in 0..jets.len() {
            let f = |y: &[f64]| basis.psi_values(y).unwrap()[k];
            for i in 0..2 {
                let g = fd::central_grad(&f, &x, i, 1e-4);
                let s = fd::central_diag2(&f, &x, i, 1e-4);
                assert!(fd::close_rel(jets[k].grad[i], g, 1e-5), "grad k={k} i={i}");
                assert!(fd::close_rel(jets[k].diag2[i], s, 1e-4), "diag2 k={k} i={i}");
            }
        }
    }
}
