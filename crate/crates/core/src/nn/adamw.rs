use serde::{Deserialize, Serialize};

use super::ParamSlot;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Moment buffers are allocated on the first
/// step and must keep the same layout afterwards.
#[derive(Clone, Debug)]
pub struct AdamWState {
    pub config: AdamWConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new(config: AdamWConfig) -> Self {
        AdamWState {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, slots: &mut [ParamSlot<'_>]) -> Result<()> {
        if self.step == 0 {
            self.first = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
            self.second = self.first.clone();
        }
        if slots.len() != self.first.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                slots.len()
            )));
        }
        for (i, s) in slots.iter().enumerate() {
            if s.value.len() != s.grad.len() || s.value.len() != self.first[i].len() {
                return Err(Error::Shape(format!("optimizer tensor `{}`", s.name)));
            }
        }

        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2_sqrt = (1.0 - beta2.powi(self.step as i32)).sqrt();
        let step_size = lr / bc1;
        let decay = 1.0 - lr * weight_decay;
        let k = Coefficients {
            beta1,
            beta2,
            c1: 1.0 - beta1,
            c2: 1.0 - beta2,
            bc2_sqrt,
            step_size,
            decay,
            eps,
        };
        for (i, s) in slots.iter_mut().enumerate() {
            update(&k, s.value, s.grad, &mut self.first[i], &mut self.second[i]);
        }
        Ok(())
    }
}

struct Coefficients {
    beta1: f64,
    beta2: f64,
    c1: f64,
    c2: f64,
    bc2_sqrt: f64,
    step_size: f64,
    decay: f64,
    eps: f64,
}

fn update(k: &Coefficients, value: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
    let n = value.len();
    let (grad, m, v) = (&grad[..n], &mut m[..n], &mut v[..n]);
    for j in 0..n {
        let g = grad[j];
        m[j] = k.beta1 * m[j] + k.c1 * g;
        v[j] = k.beta2 * v[j] + k.c2 * g * g;
        let denom = v[j].sqrt() / k.bc2_sqrt + k.eps;
        value[j] = value[j] * k.decay - k.step_size * m[j] / denom;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_scalar(state: &mut AdamWState, theta: &mut f64, g: f64) {
        let mut v = [*theta];
        let mut gr = [g];
        let mut slots = [ParamSlot {
            name: "x".into(),
            value: &mut v,
            grad: &mut gr,
        }];
        state.step(&mut slots).unwrap();
        *theta = v[0];
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut s = AdamWState::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        let mut theta = 1.25;
        for _ in 0..5 {
            step_scalar(&mut s, &mut theta, 0.0);
        }
        assert_eq!(theta, 1.25);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn single_step_closed_form() {
        let mut s = AdamWState::new(AdamWConfig {
            lr: 0.01,
            ..Default::default()
        });
        let mut theta = 1.0;
        step_scalar(&mut s, &mut theta, 1.0);
        // m_hat = v_hat = 1 after bias correction
        let expected = 1.0 - 0.01 * (1.0 / (1.0 + 1e-8) + 0.01 * 1.0);
        assert!((theta - expected).abs() < 1e-15);
    }

    #[test]
    fn decay_shrinks_monotonically_toward_zero() {
        let mut s = AdamWState::new(AdamWConfig {
            lr: 0.1,
            ..Default::default()
        });
        let mut vals = [3.0, -2.0, 0.5];
        let mut grads = [0.0; 3];
        let mut prev = vals;
        for _ in 0..50 {
            let mut slots = [ParamSlot {
                name: "w".into(),
                value: &mut vals,
                grad: &mut grads,
            }];
            s.step(&mut slots).unwrap();
            for (p, v) in prev.iter().zip(&vals) {
                assert!(v.abs() < p.abs());
                assert_eq!(v.signum(), p.signum());
            }
            prev = vals;
        }
        assert!(s.second_moments().iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn layout_change_is_shape_error() {
        let mut s = AdamWState::new(AdamWConfig::default());
        let mut a = [1.0, 2.0];
        let mut ga = [0.1, 0.1];
        s.step(&mut [ParamSlot {
            name: "a".into(),
            value: &mut a,
            grad: &mut ga,
        }])
        .unwrap();
        let mut b = [1.0];
        let mut gb = [0.1];
        let r = s.step(&mut [ParamSlot {
            name: "a".into(),
            value: &mut b,
            grad: &mut gb,
        }]);
        assert!(matches!(r, Err(Error::Shape(_))));
    }
}
