use std::collections::HashMap;

use super::{Module, Tensor};

#[derive(Debug, Clone)]
struct Slot {
    m: Tensor,
    v: Tensor,
}

/// Adam with bias correction. Moment estimates are keyed by parameter name,
/// so one optimizer can drive any module whose `visit` names are stable.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    slots: HashMap<String, Slot>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            slots: HashMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter from its current gradient.
    /// Gradients are left untouched.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.lr);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let slots = &mut self.slots;
        module.visit("", &mut |name, p| {
            if !p.trainable {
                return;
            }
            let slot = slots.entry(name.to_string()).or_insert_with(|| Slot {
                m: Tensor::zeros(p.value.raw_dim()),
                v: Tensor::zeros(p.value.raw_dim()),
            });
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(&mut slot.m)
                .and(&mut slot.v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *w -= lr * mhat / (vhat.sqrt() + eps);
                });
        });
    }
}
