//! Adaptive-moment optimizer with bias correction.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::neural::params::ParameterStore;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    first: BTreeMap<String, Array2<f64>>,
    second: BTreeMap<String, Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            first: BTreeMap::new(),
            second: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update using the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        let first = &mut self.first;
        let second = &mut self.second;
        store.for_each_mut(|name, value, grad| {
            let m = first
                .entry(name.to_string())
                .or_insert_with(|| Array2::zeros(value.dim()));
            let v = second
                .entry(name.to_string())
                .or_insert_with(|| Array2::zeros(value.dim()));
            azip(m, v, value, grad, |m, v, value, g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *value -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        });
    }
}

fn azip(
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    value: &mut Array2<f64>,
    grad: &Array2<f64>,
    mut f: impl FnMut(&mut f64, &mut f64, &mut f64, f64),
) {
    for ((m, v), (value, g)) in m
        .iter_mut()
        .zip(v.iter_mut())
        .zip(value.iter_mut().zip(grad.iter()))
    {
        f(m, v, value, *g);
    }
}
