//! Adam with bias correction, state keyed by parameter name.

use super::matrix::Matrix;
use std::collections::BTreeMap;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, state: BTreeMap::new() }
    }

    /// Advance the shared step counter; call once per optimizer step,
    /// before the per-parameter updates.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    pub fn update(&mut self, name: &str, param: &mut Matrix, grad: &Matrix) {
        assert_eq!(param.shape(), grad.shape(), "gradient shape mismatch for {name}");
        assert!(self.t > 0, "begin_step before update");
        let (m, v) = self
            .state
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; param.data.len()], vec![0.0; param.data.len()]));
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..param.data.len() {
            let g = grad.data[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            param.data[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // f(x) = x², ∇f = 2x
        let mut p = Matrix::filled(1, 1, 3.0);
        let mut opt = Adam::new(0.1);
        for _ in 0..200 {
            opt.begin_step();
            let g = Matrix::filled(1, 1, 2.0 * p.data[0]);
            opt.update("x", &mut p, &g);
        }
        assert!(p.data[0].abs() < 0.05, "ended at {}", p.data[0]);
    }

    #[test]
    fn first_step_is_lr_sized() {
        // With bias correction the very first update is ≈ lr · sign(g).
        let mut p = Matrix::filled(1, 2, 0.0);
        let mut opt = Adam::new(1e-3);
        opt.begin_step();
        let g = Matrix::from_rows(&[vec![0.4, -7.0]]);
        opt.update("p", &mut p, &g);
        assert!((p.data[0] + 1e-3).abs() < 1e-6);
        assert!((p.data[1] - 1e-3).abs() < 1e-6);
    }
}
