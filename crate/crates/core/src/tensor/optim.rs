use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Tape, Tensor2, Var};

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor2,
    pub grad: Tensor2,
    first_moment: Tensor2,
    second_moment: Tensor2,
    step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor2) -> Self {
        let (r, c) = value.shape();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor2::zeros(r, c),
            first_moment: Tensor2::zeros(r, c),
            second_moment: Tensor2::zeros(r, c),
            step: 0,
        }
    }

    /// Uniform in `±√(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng>(name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
        Parameter::new(name, Tensor2::from_vec(fan_in, fan_out, data))
    }

    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Parameter::new(name, Tensor2::zeros(rows, cols))
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Records the current value on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Var {
        tape.variable(self.value.clone())
    }

    /// Adds the tape's gradient for `var` into the accumulator.
    pub fn accumulate(&mut self, tape: &Tape, var: Var) {
        if let Some(g) = tape.grad(var) {
            self.grad.add_assign(g);
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Resets moments and step counter, keeping the value.
    pub fn reset_optimizer_state(&mut self) {
        self.first_moment.fill(0.0);
        self.second_moment.fill(0.0);
        self.step = 0;
    }
}

/// Adam with bias correction and coupled L2 weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }

    /// One update of every parameter from its accumulated gradient
    /// (`g + weight_decay·w`), then clears the gradients.
    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut Parameter>) {
        for p in params {
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_mut_slice();
            let m = p.first_moment.as_mut_slice();
            let v = p.second_moment.as_mut_slice();
            for i in 0..values.len() {
                let g = grads[i] + self.weight_decay * values[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                grads[i] = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Parameter::new("w", Tensor2::from_rows(&[[1.0, -2.0]]));
        Adam::new(0.01, 0.0).step([&mut p]);
        assert_eq!(p.value, Tensor2::from_rows(&[[1.0, -2.0]]));
        assert_eq!(p.step_count(), 1);
    }

    #[test]
    fn single_step_reference() {
        let mut p = Parameter::new("w", Tensor2::scalar(1.0));
        p.grad = Tensor2::scalar(1.0);
        Adam::new(0.01, 0.0).step([&mut p]);
        let expected = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((p.value.item() - expected).abs() < 1e-15);
        assert!((p.value.item() - 0.99).abs() < 1e-9);
        assert_eq!(p.grad.item(), 0.0);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = Parameter::new("w", Tensor2::scalar(1.0));
        let adam = Adam::new(0.01, 0.0);
        let mut last = p.value.item();
        for _ in 0..2 {
            p.grad = Tensor2::scalar(1.0);
            adam.step([&mut p]);
            assert!(p.value.item() < last);
            last = p.value.item();
        }
    }

    #[test]
    fn weight_decay_is_coupled() {
        // With g = 0 the decay term alone drives the first step: g' = wd·w.
        let mut p = Parameter::new("w", Tensor2::scalar(2.0));
        Adam::new(0.1, 0.5).step([&mut p]);
        let expected = 2.0 - 0.1 * 1.0 / (1.0 + 1e-8);
        assert!((p.value.item() - expected).abs() < 1e-12);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = crate::rng::stream(3, crate::rng::Stream::NodeInit);
        let p = Parameter::glorot("w", 10, 6, &mut rng);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(p.value.as_slice().iter().all(|v| v.abs() <= bound));
    }
}
