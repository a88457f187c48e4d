//! Adam optimizer with bias correction.

use super::{Parameter, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Step counter; bias correction uses the post-increment value.
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamState { lr, beta1, beta2, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Rebuild from checkpointed moments.
    pub fn from_parts(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        t: u64,
        m: Vec<Tensor>,
        v: Vec<Tensor>,
    ) -> Self {
        AdamState { lr, beta1, beta2, eps, t, m, v }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected update over `params` (in a fixed order the caller
    /// must keep stable across steps). Gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            let g = p.grad.data();
            let w = p.value.data_mut();
            for i in 0..w.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                w[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut p = Parameter::new("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]));
        p.grad.data_mut().copy_from_slice(&[0.3, -0.7, 5.0]);
        let mut adam = AdamState::new(0.01, 0.9, 0.999);
        adam.step(&mut [&mut p]);
        // At t=1 the bias-corrected ratio is sign(g) up to eps.
        let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (w, e) in p.value.data().iter().zip(expect) {
            assert!((w - e).abs() < 1e-6, "{w} vs {e}");
        }
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_means_no_movement() {
        let mut p = Parameter::new("w", Tensor::from_vec(&[2], vec![0.4, -0.9]));
        let before = p.value.clone();
        let mut adam = AdamState::new(0.5, 0.9, 0.999);
        adam.step(&mut [&mut p]);
        assert_eq!(p.value, before);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = w^2, gradient 2w, from w = 1 with lr = 0.01 for 200 steps.
        let mut p = Parameter::new("w", Tensor::from_vec(&[1], vec![1.0]));
        let mut adam = AdamState::new(0.01, 0.9, 0.999);
        for _ in 0..200 {
            let w = p.value.data()[0];
            p.grad.data_mut()[0] = 2.0 * w;
            adam.step(&mut [&mut p]);
        }
        assert!(p.value.data()[0].abs() < 0.5, "w = {}", p.value.data()[0]);
    }
}
