//! The sampled physics loss as a functional of the hidden jets, for both
//! predictor heads:
//!
//! * `Readout`: u = W h(x), the vanilla pre-training shape;
//! * `Basis`: u = psi(x)' theta, the bi-level shape (theta fixed during the
//!   upper update).
//!
//! An optional correction vector `v` folds the implicit-function-theorem term
//! into the same reverse pass: with it the adjoints encode
//! grad_w [ L(w) - v' (Q(w) theta + c(w)) ], which is what the hypergradient
//! needs after solving (Q + g I) v = dL/dtheta.

use crate::diff::{JetBatch, LossFunctional};
use crate::error::{IfefError, Result};
use crate::features::Extension;
use crate::pde::{
    BoundarySample, CollocationSet, Deriv, InteriorOp, LinearOperatorSpec, PdeProblem,
};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

#[derive(Clone, Copy)]
pub enum Head<'a> {
    /// u = W h(x); gradients flow into W as well.
    Readout(&'a Array2<f64>),
    /// u = psi(x)' theta with theta held fixed.
    Basis { theta: &'a Array1<f64>, extension: &'a Extension },
}

/// Adjoint (or linear functional) over the jet components of the scalar
/// prediction at one point.
#[derive(Clone)]
struct UAdj {
    v: f64,
    g: Vec<f64>,
    s: Vec<f64>,
}

impl UAdj {
    fn zero(n: usize) -> Self {
        UAdj { v: 0.0, g: vec![0.0; n], s: vec![0.0; n] }
    }

    fn from_op(op: &LinearOperatorSpec, scale: f64, n: usize) -> Self {
        let mut a = UAdj::zero(n);
        for (d, coeff) in &op.terms {
            match d {
                Deriv::Value => a.v += scale * coeff,
                Deriv::First(i) => a.g[*i] += scale * coeff,
                Deriv::Second(i) => a.s[*i] += scale * coeff,
            }
        }
        a
    }

    fn value_only(scale: f64, n: usize) -> Self {
        let mut a = UAdj::zero(n);
        a.v = scale;
        a
    }

    fn grad_axis(axis: usize, scale: f64, n: usize) -> Self {
        let mut a = UAdj::zero(n);
        a.g[axis] = scale;
        a
    }

    fn scaled(&self, factor: f64) -> UAdj {
        UAdj {
            v: factor * self.v,
            g: self.g.iter().map(|x| factor * x).collect(),
            s: self.s.iter().map(|x| factor * x).collect(),
        }
    }
}

/// Jet of the scalar prediction: contraction of the basis jets with a
/// coefficient vector.
struct UJet {
    v: f64,
    g: Vec<f64>,
    s: Vec<f64>,
}

fn contract(batch: &JetBatch, coeff: &Array1<f64>) -> UJet {
    let n = batch.axes();
    let mut u = UJet { v: batch.value.dot(coeff), g: vec![0.0; n], s: vec![0.0; n] };
    for i in 0..n {
        u.g[i] = batch.grad.column(i).dot(coeff);
        u.s[i] = batch.diag2.column(i).dot(coeff);
    }
    u
}

fn apply_op_to_ujet(op: &LinearOperatorSpec, u: &UJet) -> f64 {
    op.terms
        .iter()
        .map(|(d, coeff)| {
            coeff
                * match d {
                    Deriv::Value => u.v,
                    Deriv::First(i) => u.g[*i],
                    Deriv::Second(i) => u.s[*i],
                }
        })
        .sum()
}

/// psi_adj += uadj (outer) coeff.
fn add_contribution(out: &mut JetBatch, coeff: &Array1<f64>, adj: &UAdj) {
    let n = out.axes();
    if adj.v != 0.0 {
        out.value.scaled_add(adj.v, coeff);
    }
    for i in 0..n {
        if adj.g[i] != 0.0 {
            out.grad.column_mut(i).scaled_add(adj.g[i], coeff);
        }
        if adj.s[i] != 0.0 {
            out.diag2.column_mut(i).scaled_add(adj.s[i], coeff);
        }
    }
}

/// Contraction of the psi jets against a u-adjoint (readout-row gradient).
fn contract_adjoint(psi: &JetBatch, adj: &UAdj) -> Array1<f64> {
    let n = psi.axes();
    let mut out = &psi.value * adj.v;
    for i in 0..n {
        if adj.g[i] != 0.0 {
            out.scaled_add(adj.g[i], &psi.grad.column(i));
        }
        if adj.s[i] != 0.0 {
            out.scaled_add(adj.s[i], &psi.diag2.column(i));
        }
    }
    out
}

enum Entry {
    Interior { point: usize, source: f64 },
    BoundaryPoint { point: usize, target: f64 },
    BoundaryPair { a: usize, b: usize, axis: usize, order: u8 },
}

/// The sampled loss (1/N_u) sum boundary residuals^2 + (lambda/N_f) sum
/// interior residuals^2 over a fixed collocation set.
pub struct PinnLoss<'a> {
    problem: &'a PdeProblem,
    head: Head<'a>,
    pub lambda: f64,
    /// Optional IFT correction: (v, lambda_ll of the lower system).
    correction: Option<(&'a Array1<f64>, f64)>,
    points: Vec<Vec<f64>>,
    entries: Vec<Entry>,
    n_u: usize,
    n_f: usize,
    order: u8,
}

impl<'a> PinnLoss<'a> {
    pub fn new(
        problem: &'a PdeProblem,
        colloc: &'a CollocationSet,
        lambda: f64,
        head: Head<'a>,
    ) -> Result<Self> {
        if colloc.n_u() == 0 || colloc.n_f() == 0 {
            return Err(IfefError::config("collocation set needs boundary and interior points"));
        }
        let mut points = Vec::with_capacity(colloc.n_f() + 2 * colloc.n_u());
        let mut entries = Vec::with_capacity(colloc.n_f() + colloc.n_u());
        for x in &colloc.interior {
            entries.push(Entry::Interior { point: points.len(), source: (problem.source)(x) });
            points.push(x.clone());
        }
        for s in &colloc.boundary {
            match s {
                BoundarySample::Point { x, target, .. } => {
                    entries.push(Entry::BoundaryPoint { point: points.len(), target: *target });
                    points.push(x.clone());
                }
                BoundarySample::Pair { a, b, axis, order } => {
                    entries.push(Entry::BoundaryPair {
                        a: points.len(),
                        b: points.len() + 1,
                        axis: *axis,
                        order: *order,
                    });
                    points.push(a.clone());
                    points.push(b.clone());
                }
            }
        }
        Ok(PinnLoss {
            problem,
            head,
            lambda,
            correction: None,
            points,
            entries,
            n_u: colloc.n_u(),
            n_f: colloc.n_f(),
            order: problem.required_order(),
        })
    }

    /// Install the IFT correction term (see module docs).
    pub fn with_correction(mut self, v: &'a Array1<f64>, lambda_ll: f64) -> Self {
        self.correction = Some((v, lambda_ll));
        self
    }

    fn coeff_row(&self) -> Array1<f64> {
        match &self.head {
            Head::Readout(w) => w.row(0).to_owned(),
            Head::Basis { theta, .. } => (*theta).clone(),
        }
    }

    fn psi_of(&self, hidden: &JetBatch) -> (JetBatch, Option<crate::features::PsiTape>) {
        match &self.head {
            Head::Readout(_) => (hidden.clone(), None),
            Head::Basis { extension, .. } => extension.forward(hidden),
        }
    }

    fn backward_head(
        &self,
        tape: Option<&crate::features::PsiTape>,
        psi_adj: &JetBatch,
    ) -> JetBatch {
        match &self.head {
            Head::Readout(_) => psi_adj.clone(),
            Head::Basis { extension, .. } => extension.backward(tape, psi_adj, self.order),
        }
    }

    fn readout_contribution(&self, psi: &JetBatch, adj: &UAdj) -> Option<Array2<f64>> {
        match &self.head {
            Head::Readout(_) => Some(contract_adjoint(psi, adj).insert_axis(ndarray::Axis(0))),
            Head::Basis { .. } => None,
        }
    }

    /// Loss contribution of one entry and, when asked, the hidden-jet
    /// adjoints of its points plus its readout-gradient contribution.
    fn eval_entry(
        &self,
        entry: &Entry,
        w_row: &Array1<f64>,
        jets: &[JetBatch],
        want_adjoints: bool,
    ) -> (f64, Vec<(usize, JetBatch)>, Option<Array2<f64>>) {
        let n = self.problem.dim;
        let (w_bnd, w_int) = (1.0 / self.n_u as f64, self.lambda / self.n_f as f64);

        match entry {
            Entry::Interior { point, source } => {
                let (psi, tape) = self.psi_of(&jets[*point]);
                let u = contract(&psi, w_row);
                let (residual, dr): (f64, UAdj) = match &self.problem.interior {
                    InteriorOp::Linear(op) => {
                        (apply_op_to_ujet(op, &u) - source, UAdj::from_op(op, 1.0, n))
                    }
                    InteriorOp::Burgers { nu } => {
                        let r = u.g[0] + u.v * u.g[1] - nu * u.s[1] - source;
                        let mut dr = UAdj::zero(n);
                        dr.v = u.g[1];
                        dr.g[0] = 1.0;
                        dr.g[1] = u.v;
                        dr.s[1] = -nu;
                        (r, dr)
                    }
                };
                let loss = w_int * residual * residual;
                if !want_adjoints {
                    return (loss, Vec::new(), None);
                }
                let adj_l = dr.scaled(2.0 * w_int * residual);
                let mut psi_adj = JetBatch::zeros(psi.len(), n, self.order);
                add_contribution(&mut psi_adj, w_row, &adj_l);
                if let (Some((v, lambda_ll)), InteriorOp::Linear(op)) =
                    (self.correction, &self.problem.interior)
                {
                    let alpha = apply_op_to_ujet(op, &contract(&psi, v));
                    let w2 = 2.0 * lambda_ll / self.n_f as f64;
                    // Signs: the hypergradient subtracts grad of v'(Q th + c).
                    add_contribution(&mut psi_adj, w_row, &UAdj::from_op(op, -w2 * alpha, n));
                    add_contribution(&mut psi_adj, v, &UAdj::from_op(op, -w2 * residual, n));
                }
                let readout = self.readout_contribution(&psi, &adj_l);
                (loss, vec![(*point, self.backward_head(tape.as_ref(), &psi_adj))], readout)
            }
            Entry::BoundaryPoint { point, target } => {
                let (psi, tape) = self.psi_of(&jets[*point]);
                let residual = psi.value.dot(w_row) - target;
                let loss = w_bnd * residual * residual;
                if !want_adjoints {
                    return (loss, Vec::new(), None);
                }
                let adj_l = UAdj::value_only(2.0 * w_bnd * residual, n);
                let mut psi_adj = JetBatch::zeros(psi.len(), n, self.order);
                add_contribution(&mut psi_adj, w_row, &adj_l);
                if let Some((v, _)) = self.correction {
                    let alpha = psi.value.dot(v);
                    let w2 = 2.0 / self.n_u as f64;
                    add_contribution(&mut psi_adj, w_row, &UAdj::value_only(-w2 * alpha, n));
                    add_contribution(&mut psi_adj, v, &UAdj::value_only(-w2 * residual, n));
                }
                let readout = self.readout_contribution(&psi, &adj_l);
                (loss, vec![(*point, self.backward_head(tape.as_ref(), &psi_adj))], readout)
            }
            Entry::BoundaryPair { a, b, axis, order } => {
                let (psi_a, tape_a) = self.psi_of(&jets[*a]);
                let (psi_b, tape_b) = self.psi_of(&jets[*b]);
                let pick = |psi: &JetBatch, coeff: &Array1<f64>| -> f64 {
                    match order {
                        0 => psi.value.dot(coeff),
                        _ => psi.grad.column(*axis).dot(coeff),
                    }
                };
                let residual = pick(&psi_a, w_row) - pick(&psi_b, w_row);
                let loss = w_bnd * residual * residual;
                if !want_adjoints {
                    return (loss, Vec::new(), None);
                }
                let make_adj = |scale: f64| -> UAdj {
                    match order {
                        0 => UAdj::value_only(scale, n),
                        _ => UAdj::grad_axis(*axis, scale, n),
                    }
                };
                let alpha = match self.correction {
                    Some((v, _)) => pick(&psi_a, v) - pick(&psi_b, v),
                    None => 0.0,
                };
                let w2 = 2.0 / self.n_u as f64;

                let mut out = Vec::with_capacity(2);
                let mut readout_sum: Option<Array2<f64>> = None;
                for (sign, psi, tape, point) in
                    [(1.0, &psi_a, tape_a.as_ref(), *a), (-1.0, &psi_b, tape_b.as_ref(), *b)]
                {
                    let adj_l = make_adj(sign * 2.0 * w_bnd * residual);
                    let mut psi_adj = JetBatch::zeros(psi.len(), n, self.order);
                    add_contribution(&mut psi_adj, w_row, &adj_l);
                    if let Some((v, _)) = self.correction {
                        add_contribution(&mut psi_adj, w_row, &make_adj(-sign * w2 * alpha));
                        add_contribution(&mut psi_adj, v, &make_adj(-sign * w2 * residual));
                    }
                    if let Some(r) = self.readout_contribution(psi, &adj_l) {
                        match &mut readout_sum {
                            Some(acc) => *acc += &r,
                            None => readout_sum = Some(r),
                        }
                    }
                    out.push((point, self.backward_head(tape, &psi_adj)));
                }
                (loss, out, readout_sum)
            }
        }
    }

    fn eval(
        &self,
        jets: &[JetBatch],
        want_adjoints: bool,
    ) -> Result<(f64, Vec<JetBatch>, Option<Array2<f64>>)> {
        let n = self.problem.dim;
        let hidden_len = jets.first().map(|j| j.len()).unwrap_or(0);
        let w_row = self.coeff_row();
        let chunks: Vec<(f64, Vec<(usize, JetBatch)>, Option<Array2<f64>>)> = self
            .entries
            .par_chunks(64)
            .map(|chunk| {
                let mut loss = 0.0;
                let mut adjoints = Vec::new();
                let mut readout: Option<Array2<f64>> = None;
                for e in chunk {
                    let (l, adj, r) = self.eval_entry(e, &w_row, jets, want_adjoints);
                    loss += l;
                    adjoints.extend(adj);
                    if let Some(r) = r {
                        match &mut readout {
                            Some(acc) => *acc += &r,
                            None => readout = Some(r),
                        }
                    }
                }
                (loss, adjoints, readout)
            })
            .collect();

        let mut loss = 0.0;
        let mut readout: Option<Array2<f64>> = None;
        let mut adjoints = if want_adjoints {
            vec![JetBatch::zeros(hidden_len, n, self.order); self.points.len()]
        } else {
            Vec::new()
        };
        for (l, adj, r) in chunks {
            loss += l;
            for (idx, a) in adj {
                adjoints[idx] = a;
            }
            if let Some(r) = r {
                match &mut readout {
                    Some(acc) => *acc += &r,
                    None => readout = Some(r),
                }
            }
        }
        if !loss.is_finite() {
            return Err(IfefError::numeric(None, format!("non-finite loss {loss}")));
        }
        Ok((loss, adjoints, readout))
    }
}

impl LossFunctional for PinnLoss<'_> {
    fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn order(&self) -> u8 {
        self.order
    }

    fn value(&self, jets: &[JetBatch]) -> Result<f64> {
        Ok(self.eval(jets, false)?.0)
    }

    fn value_and_adjoints(
        &self,
        jets: &[JetBatch],
    ) -> Result<(f64, Vec<JetBatch>, Option<Array2<f64>>)> {
        self.eval(jets, true)
    }
}
