//! First-order optimizers for the upper-level parameters. Adam is the
//! default; plain gradient descent is kept for the monotone-decrease
//! property checks where the step-size theory applies directly.

/// Adam with the usual defaults (beta1 0.9, beta2 0.999, eps 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; dim], v: vec![0.0; dim] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Which rule the upper update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperRule {
    Adam,
    Sgd,
}

/// Optimizer state for the upper parameters.
#[derive(Debug, Clone)]
pub enum UpperOptimizer {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl UpperOptimizer {
    pub fn new(rule: UpperRule, dim: usize, lr: f64) -> Self {
        match rule {
            UpperRule::Adam => UpperOptimizer::Adam(Adam::new(dim, lr)),
            UpperRule::Sgd => UpperOptimizer::Sgd { lr },
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            UpperOptimizer::Adam(a) => a.step(params, grad),
            UpperOptimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut adam = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let grad: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            adam.step(&mut x, &grad);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-4), "{x:?}");
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let mut x = vec![1.0, 2.0];
        let mut opt = UpperOptimizer::new(UpperRule::Sgd, 2, 0.0);
        opt.step(&mut x, &[5.0, -5.0]);
        assert_eq!(x, vec![1.0, 2.0]);
    }
}
