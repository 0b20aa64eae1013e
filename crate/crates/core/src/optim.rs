//! Adam with bias correction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in parameter {param} at element {index}")]
    NonFiniteGradient { param: usize, index: usize },
    #[error("parameter {param}: gradient shape {grad:?} vs parameter {value:?}")]
    Shape {
        param: usize,
        grad: Vec<usize>,
        value: Vec<usize>,
    },
    #[error("{params} parameters but {state} moment buffers")]
    Count { params: usize, state: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments per parameter tensor and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Vec<f64>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }
}

impl Adam {
    /// One descent step on `params` along `grads`. Nothing is modified when
    /// any gradient is non-finite.
    pub fn step(&self, state: &mut AdamState, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
        if params.len() != grads.len() || params.len() != state.m.len() {
            return Err(OptimError::Count {
                params: params.len(),
                state: state.m.len(),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(OptimError::Shape {
                    param: i,
                    grad: g.shape().to_vec(),
                    value: p.shape().to_vec(),
                });
            }
            if let Some(index) = g.data().iter().position(|x| !x.is_finite()) {
                return Err(OptimError::NonFiniteGradient { param: i, index });
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
            for (((x, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(adam: &Adam, state: &mut AdamState, x: &mut Tensor, g: f64) {
        adam.step(state, &mut [x], &[Tensor::scalar(g)]).unwrap();
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let adam = Adam { lr: 0.1, ..Adam::default() };
        let mut x = Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let mut state = AdamState::new([&x]);
        for _ in 0..3 {
            adam.step(&mut state, &mut [&mut x], &[Tensor::zeros(&[1, 2])]).unwrap();
        }
        assert_eq!(x.data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let adam = Adam { lr: 0.01, ..Adam::default() };
        for g in [3.0, -0.2, 1e-3] {
            let mut x = Tensor::scalar(0.0);
            let mut state = AdamState::new([&x]);
            scalar_step(&adam, &mut state, &mut x, g);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((x.item() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn two_steps_match_hand_trace() {
        let adam = Adam {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut x = Tensor::scalar(1.0);
        let mut state = AdamState::new([&x]);
        scalar_step(&adam, &mut state, &mut x, 2.0);
        scalar_step(&adam, &mut state, &mut x, 2.0);
        // m1 = 0.2, v1 = 0.004; m2 = 0.38, v2 = 0.007996.
        // Each bias-corrected ratio is exactly 2/2, so x = 1 − 2·0.1·(2/(2+1e-8)).
        let (m2, v2) = (0.38, 0.007_996);
        let step2 = 0.1 * (m2 / 0.19) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        let step1 = 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((x.item() - (1.0 - step1 - step2)).abs() < 1e-12);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn non_finite_gradient_aborts_without_changes() {
        let adam = Adam::default();
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut state = AdamState::new([&a, &b]);
        let err = adam
            .step(&mut state, &mut [&mut a, &mut b], &[Tensor::scalar(1.0), Tensor::scalar(f64::NAN)])
            .unwrap_err();
        assert_eq!(err, OptimError::NonFiniteGradient { param: 1, index: 0 });
        assert_eq!((a.item(), b.item(), state.step), (1.0, 2.0, 0));
    }
}
