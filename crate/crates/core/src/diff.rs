//! Exact differentiation of tanh networks and the losses built on them.
//!
//! Two directions are combined. Forward, per input point, each quantity
//! carries a 2-jet per input axis: value, first derivative, and the diagonal
//! of the Hessian (no mixed terms — nothing in the benchmark suite needs
//! them). Backward, a hand-derived reverse pass over those jet coefficients
//! turns adjoints of any output-jet component into gradients with respect to
//! the network parameters, so losses containing Laplacian terms reach the
//! parameters exactly.
//!
//! Parameter enumeration is fixed: layer by layer, weight matrix in row-major
//! order, then the bias vector; the optional readout row comes last. Gradient
//! vectors, checkpoints and finite-difference oracles all share this layout.

use crate::error::{IfefError, Result};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Value, per-axis first derivatives, and per-axis second derivatives of a
/// scalar quantity at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub diag2: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet2 { value, grad: vec![0.0; n], diag2: vec![0.0; n] }
    }

    /// The coordinate variable along `axis`.
    pub fn var(value: f64, axis: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[axis] = 1.0;
        Jet2 { value, grad, diag2: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn add(&self, rhs: &Jet2) -> Jet2 {
        self.zip(rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Jet2) -> Jet2 {
        self.zip(rhs, |a, b| a - b)
    }

    /// Product rule per axis: (fg)_i = f_i g + f g_i, (fg)_ii = f_ii g + 2 f_i g_i + f g_ii.
    pub fn mul(&self, rhs: &Jet2) -> Jet2 {
        let n = self.dim();
        let mut out = Jet2::constant(self.value * rhs.value, n);
        for i in 0..n {
            out.grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
            out.diag2[i] = self.diag2[i] * rhs.value
                + 2.0 * self.grad[i] * rhs.grad[i]
                + self.value * rhs.diag2[i];
        }
        out
    }

    pub fn scale(&self, a: f64) -> Jet2 {
        Jet2 {
            value: a * self.value,
            grad: self.grad.iter().map(|g| a * g).collect(),
            diag2: self.diag2.iter().map(|s| a * s).collect(),
        }
    }

    /// Chain rule through a smooth scalar map given f'(v) and f''(v).
    pub fn map(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        let n = self.dim();
        let mut out = Jet2::constant(value, n);
        for i in 0..n {
            out.grad[i] = d1 * self.grad[i];
            out.diag2[i] = d2 * self.grad[i] * self.grad[i] + d1 * self.diag2[i];
        }
        out
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.map(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.map(c, -s, -c)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.map(e, e, e)
    }

    pub fn tanh(&self) -> Jet2 {
        let t = self.value.tanh();
        let t1 = 1.0 - t * t;
        self.map(t, t1, -2.0 * t * t1)
    }

    fn zip(&self, rhs: &Jet2, f: impl Fn(f64, f64) -> f64) -> Jet2 {
        Jet2 {
            value: f(self.value, rhs.value),
            grad: self.grad.iter().zip(&rhs.grad).map(|(a, b)| f(*a, *b)).collect(),
            diag2: self.diag2.iter().zip(&rhs.diag2).map(|(a, b)| f(*a, *b)).collect(),
        }
    }
}

/// Jets of a vector-valued quantity: `value[k]`, `grad[[k, i]] = ∂v_k/∂x_i`,
/// `diag2[[k, i]] = ∂²v_k/∂x_i²`. `order` flags how many derivative levels
/// are populated; higher levels are zero-filled.
#[derive(Debug, Clone)]
pub struct JetBatch {
    pub value: Array1<f64>,
    pub grad: Array2<f64>,
    pub diag2: Array2<f64>,
    pub order: u8,
}

impl JetBatch {
    pub fn zeros(len: usize, axes: usize, order: u8) -> Self {
        JetBatch {
            value: Array1::zeros(len),
            grad: Array2::zeros((len, axes)),
            diag2: Array2::zeros((len, axes)),
            order,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn axes(&self) -> usize {
        self.grad.ncols()
    }

    pub fn jet(&self, k: usize) -> Jet2 {
        Jet2 {
            value: self.value[k],
            grad: self.grad.row(k).to_vec(),
            diag2: self.diag2.row(k).to_vec(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.value.iter().all(|v| v.is_finite())
            && self.grad.iter().all(|v| v.is_finite())
            && self.diag2.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feed-forward tanh network parameters. Every layer in `layers` is
/// affine + tanh; the optional `readout` row is a plain linear map used only
/// during pre-training.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
    pub readout: Option<Array2<f64>>,
}

impl NetworkParams {
    pub fn new(layers: Vec<Layer>, readout: Option<Array2<f64>>) -> Result<Self> {
        let p = NetworkParams { layers, readout };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(IfefError::config("network needs at least one layer"));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.weight.nrows() != layer.bias.len() {
                return Err(IfefError::config(format!(
                    "layer {k}: weight has {} rows but bias has {} entries",
                    layer.weight.nrows(),
                    layer.bias.len()
                )));
            }
            if k > 0 && layer.weight.ncols() != self.layers[k - 1].weight.nrows() {
                return Err(IfefError::config(format!(
                    "layer {k}: expects {} inputs but layer {} outputs {}",
                    layer.weight.ncols(),
                    k - 1,
                    self.layers[k - 1].weight.nrows()
                )));
            }
        }
        if let Some(w) = &self.readout {
            if w.nrows() != 1 || w.ncols() != self.hidden_dim() {
                return Err(IfefError::config(format!(
                    "readout must be 1x{}, got {}x{}",
                    self.hidden_dim(),
                    w.nrows(),
                    w.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    /// Width of the last hidden layer (the basis dimension p).
    pub fn hidden_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for l in &self.layers {
            n += l.weight.len() + l.bias.len();
        }
        if let Some(w) = &self.readout {
            n += w.len();
        }
        n
    }

    /// Glorot-uniform init for widths `dims = [input, w_1, ..., p]`.
    pub fn glorot(dims: &[usize], with_readout: bool, seed: u64) -> Result<Self> {
        use rand::Rng;
        if dims.len() < 2 {
            return Err(IfefError::config("need at least input and one hidden width"));
        }
        let mut rng = crate::rng::chacha(seed);
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight =
                Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-a..a));
            layers.push(Layer { weight, bias: Array1::zeros(fan_out) });
        }
        let readout = if with_readout {
            let p = *dims.last().unwrap();
            let a = (6.0 / (p + 1) as f64).sqrt();
            Some(Array2::from_shape_fn((1, p), |_| rng.gen_range(-a..a)))
        } else {
            None
        };
        NetworkParams::new(layers, readout)
    }

    /// Copy with the readout row dropped (the shape used by the bi-level loop).
    pub fn without_readout(&self) -> NetworkParams {
        NetworkParams { layers: self.layers.clone(), readout: None }
    }

    /// Flatten in the documented enumeration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend(l.weight.iter());
            v.extend(l.bias.iter());
        }
        if let Some(w) = &self.readout {
            v.extend(w.iter());
        }
        v
    }

    /// Inverse of [`to_flat`] against this network's shapes.
    pub fn from_flat(&self, flat: &[f64]) -> Result<NetworkParams> {
        if flat.len() != self.param_count() {
            return Err(IfefError::config(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        let mut i = 0;
        for l in &mut out.layers {
            for w in l.weight.iter_mut() {
                *w = flat[i];
                i += 1;
            }
            for b in l.bias.iter_mut() {
                *b = flat[i];
                i += 1;
            }
        }
        if let Some(w) = &mut out.readout {
            for v in w.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        Ok(out)
    }

    /// In-place `self += alpha * direction` over the enumerated parameters.
    pub fn add_scaled(&mut self, alpha: f64, direction: &[f64]) {
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut() {
                *w += alpha * direction[i];
                i += 1;
            }
            for b in l.bias.iter_mut() {
                *b += alpha * direction[i];
                i += 1;
            }
        }
        if let Some(w) = &mut self.readout {
            for v in w.iter_mut() {
                *v += alpha * direction[i];
                i += 1;
            }
        }
        debug_assert_eq!(i, direction.len());
    }
}

/// Mirror of the parameter structure used to accumulate gradients.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
    pub readout: Option<Array2<f64>>,
}

impl ParamGrad {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        ParamGrad {
            layers: params
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.dim()), Array1::zeros(l.bias.len())))
                .collect(),
            readout: params.readout.as_ref().map(|w| Array2::zeros(w.dim())),
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrad) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
        if let (Some(r), Some(or)) = (self.readout.as_mut(), other.readout.as_ref()) {
            *r += or;
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in &self.layers {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        if let Some(w) = &self.readout {
            v.extend(w.iter());
        }
        v
    }
}

/// Stored forward pass of the jet computation for one point: layer inputs
/// `a[l]` and pre-activations `z[l]`, all as jet batches.
pub struct Tape {
    a: Vec<JetBatch>,
    z: Vec<JetBatch>,
    order: u8,
}

impl Tape {
    /// Forward jets through every layer. `order` controls which derivative
    /// levels are propagated (0, 1 or 2).
    pub fn forward(params: &NetworkParams, x: &[f64], order: u8) -> Result<Tape> {
        let n = params.input_dim();
        if x.len() != n {
            return Err(IfefError::config(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                n
            )));
        }
        if order > 2 {
            return Err(IfefError::config(format!("jet order {order} > 2 unsupported")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IfefError::numeric(None, "non-finite input point"));
        }

        let mut a0 = JetBatch::zeros(n, n, order);
        a0.value = Array1::from(x.to_vec());
        if order >= 1 {
            for i in 0..n {
                a0.grad[[i, i]] = 1.0;
            }
        }

        let mut a = vec![a0];
        let mut z = Vec::with_capacity(params.layers.len());
        for layer in &params.layers {
            let prev = a.last().unwrap();
            let p_out = layer.weight.nrows();
            let mut zb = JetBatch::zeros(p_out, n, order);
            zb.value = layer.weight.dot(&prev.value) + &layer.bias;
            if order >= 1 {
                zb.grad = layer.weight.dot(&prev.grad);
            }
            if order >= 2 {
                zb.diag2 = layer.weight.dot(&prev.diag2);
            }

            let mut ab = JetBatch::zeros(p_out, n, order);
            for k in 0..p_out {
                let t = zb.value[k].tanh();
                let t1 = 1.0 - t * t;
                ab.value[k] = t;
                if order >= 1 {
                    for i in 0..n {
                        ab.grad[[k, i]] = t1 * zb.grad[[k, i]];
                    }
                }
                if order >= 2 {
                    let t2 = -2.0 * t * t1;
                    for i in 0..n {
                        let zg = zb.grad[[k, i]];
                        ab.diag2[[k, i]] = t1 * zb.diag2[[k, i]] + t2 * zg * zg;
                    }
                }
            }
            z.push(zb);
            a.push(ab);
        }
        Ok(Tape { a, z, order })
    }

    /// Jets of the last hidden layer.
    pub fn output(&self) -> &JetBatch {
        self.a.last().unwrap()
    }

    /// Reverse pass: fold adjoints of the output jets back into parameter
    /// gradients. `out_adj` carries dL/d(component) for every output-jet
    /// component; its unused levels must be zero.
    pub fn backward(&self, params: &NetworkParams, out_adj: &JetBatch, grad: &mut ParamGrad) {
        let order = self.order;
        let n = self.a[0].axes();
        let mut av = out_adj.value.clone();
        let mut ag = out_adj.grad.clone();
        let mut asq = out_adj.diag2.clone();

        for (l, layer) in params.layers.iter().enumerate().rev() {
            let zb = &self.z[l];
            let ab = &self.a[l + 1];
            let p_out = layer.weight.nrows();

            // Through tanh: adjoints of (value, grad, diag2) of a = tanh(z)
            // back to the same components of z.
            let mut zv_adj = Array1::<f64>::zeros(p_out);
            let mut zg_adj = Array2::<f64>::zeros((p_out, n));
            let mut zs_adj = Array2::<f64>::zeros((p_out, n));
            for k in 0..p_out {
                let t = ab.value[k];
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                let t3 = 2.0 * t1 * (2.0 * t * t - t1);
                let mut acc = av[k] * t1;
                if order >= 1 {
                    for i in 0..n {
                        let zg = zb.grad[[k, i]];
                        acc += ag[[k, i]] * t2 * zg;
                        zg_adj[[k, i]] = ag[[k, i]] * t1;
                        if order >= 2 {
                            let zs = zb.diag2[[k, i]];
                            let sb = asq[[k, i]];
                            acc += sb * (t2 * zs + t3 * zg * zg);
                            zg_adj[[k, i]] += sb * 2.0 * t2 * zg;
                            zs_adj[[k, i]] = sb * t1;
                        }
                    }
                }
                zv_adj[k] = acc;
            }

            // Through the affine map z = W a_prev + b.
            let prev = &self.a[l];
            let (gw, gb) = &mut grad.layers[l];
            *gb += &zv_adj;
            {
                let outer = zv_adj
                    .view()
                    .insert_axis(ndarray::Axis(1))
                    .dot(&prev.value.view().insert_axis(ndarray::Axis(0)));
                *gw += &outer;
            }
            if order >= 1 {
                *gw += &zg_adj.dot(&prev.grad.t());
            }
            if order >= 2 {
                *gw += &zs_adj.dot(&prev.diag2.t());
            }

            if l > 0 {
                av = layer.weight.t().dot(&zv_adj);
                ag = layer.weight.t().dot(&zg_adj);
                asq = layer.weight.t().dot(&zs_adj);
            }
        }
    }
}

/// Jets of every hidden-basis component at `x` (contract form).
pub fn hidden_jets(params: &NetworkParams, x: &[f64], order: u8) -> Result<Vec<Jet2>> {
    let tape = Tape::forward(params, x, order)?;
    let out = tape.output();
    Ok((0..out.len()).map(|k| out.jet(k)).collect())
}

/// Value-only forward pass (used by evaluation grids and FD oracles).
pub fn hidden_values(params: &NetworkParams, x: &[f64]) -> Result<Array1<f64>> {
    let tape = Tape::forward(params, x, 0)?;
    Ok(tape.output().value.clone())
}

/// A scalar functional of the hidden jets at a fixed collocation set.
///
/// `value_and_adjoints` returns, besides the loss, one adjoint batch per
/// point (dL/d component of the hidden output jets) plus the gradient with
/// respect to the readout row when the loss uses one.
pub trait LossFunctional: Sync {
    fn points(&self) -> &[Vec<f64>];
    fn order(&self) -> u8;
    fn value(&self, jets: &[JetBatch]) -> Result<f64>;
    fn value_and_adjoints(
        &self,
        jets: &[JetBatch],
    ) -> Result<(f64, Vec<JetBatch>, Option<Array2<f64>>)>;
}

const CHUNK: usize = 64;

fn forward_all(params: &NetworkParams, loss: &dyn LossFunctional) -> Result<Vec<Tape>> {
    let points = loss.points();
    let order = loss.order();
    let tapes: Vec<Result<Vec<Tape>>> = points
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            chunk
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let tape = Tape::forward(params, x, order)?;
                    if !tape.output().all_finite() {
                        return Err(IfefError::numeric(
                            Some(ci * CHUNK + j),
                            "non-finite network jet",
                        ));
                    }
                    Ok(tape)
                })
                .collect()
        })
        .collect();
    let mut flat = Vec::with_capacity(points.len());
    for chunk in tapes {
        flat.extend(chunk?);
    }
    Ok(flat)
}

/// Loss value alone (the finite-difference oracles drive this).
pub fn loss_value(params: &NetworkParams, loss: &dyn LossFunctional) -> Result<f64> {
    let tapes = forward_all(params, loss)?;
    let jets: Vec<JetBatch> = tapes.iter().map(|t| t.output().clone()).collect();
    loss.value(&jets)
}

/// Exact gradient of the loss with respect to every enumerated parameter.
/// Deterministic: the parallel reduction folds fixed-size chunks in order.
pub fn param_gradient(
    params: &NetworkParams,
    loss: &dyn LossFunctional,
) -> Result<(f64, ParamGrad)> {
    let tapes = forward_all(params, loss)?;
    let jets: Vec<JetBatch> = tapes.iter().map(|t| t.output().clone()).collect();
    let (value, adjoints, readout_grad) = loss.value_and_adjoints(&jets)?;
    if !value.is_finite() {
        return Err(IfefError::numeric(None, format!("non-finite loss value {value}")));
    }
    if adjoints.len() != tapes.len() {
        return Err(IfefError::config(format!(
            "loss produced {} adjoints for {} points",
            adjoints.len(),
            tapes.len()
        )));
    }

    let partials: Vec<ParamGrad> = tapes
        .par_chunks(CHUNK)
        .zip(adjoints.par_chunks(CHUNK))
        .map(|(tchunk, achunk)| {
            let mut acc = ParamGrad::zeros_like(params);
            for (tape, adj) in tchunk.iter().zip(achunk) {
                tape.backward(params, adj, &mut acc);
            }
            acc
        })
        .collect();

    let mut grad = ParamGrad::zeros_like(params);
    for p in &partials {
        grad.add_assign(p);
    }
    if let (Some(r), Some(rg)) = (grad.readout.as_mut(), readout_grad.as_ref()) {
        *r += rg;
    }
    Ok((value, grad))
}
