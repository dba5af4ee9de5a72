//! Adam optimizer over an ordered list of parameter tensors.

use crate::nn::Tensor2;
use crate::Scalar;

pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Tensor2<T>>,
    v: Vec<Tensor2<T>>,
}

impl<T: Scalar> Adam<T> {
    /// Standard moments (0.9, 0.999) and epsilon 1e-8.
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor2::zeros(r, c)).collect(),
        }
    }

    /// One update over parameters and matching gradients (same order as the
    /// shapes given at construction).
    pub fn step(&mut self, params: &mut [&mut Tensor2<T>], grads: &[&Tensor2<T>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let b1 = T::cast(self.beta1);
        let b2 = T::cast(self.beta2);
        let one_m_b1 = T::cast(1.0 - self.beta1);
        let one_m_b2 = T::cast(1.0 - self.beta2);
        let bias1 = T::cast(1.0 - self.beta1.powi(self.step as i32));
        let bias2 = T::cast(1.0 - self.beta2.powi(self.step as i32));
        let lr = T::cast(self.lr);
        let eps = T::cast(self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.data.len(), g.data.len());
            for i in 0..p.data.len() {
                let grad = g.data[i];
                m.data[i] = b1 * m.data[i] + one_m_b1 * grad;
                v.data[i] = b2 * v.data[i] + one_m_b2 * grad * grad;
                let m_hat = m.data[i] / bias1;
                let v_hat = v.data[i] / bias2;
                p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
