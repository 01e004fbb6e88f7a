use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one ordered group of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update using the gradients stored on `params`.
///
/// Parameters without an allocated gradient are treated as having a zero
/// gradient. The state is sized lazily on the first call; later calls must
/// pass the same parameters in the same order.
pub fn adam_step(params: &mut [&mut Tensor], state: &mut AdamState) -> Result<()> {
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::ShapeMismatch {
            op: "adam_step",
            left: state.m.iter().map(Vec::len).collect(),
            right: params.iter().map(|p| p.len()).collect(),
        });
    }
    if params
        .iter()
        .any(|p| p.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())))
    {
        return Err(Error::NonFiniteGradient);
    }

    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let Some(grad) = p.grad().map(<[f64]>::to_vec) else {
            // zero gradient: moments decay, parameters move by the decayed momentum
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                m[i] *= beta1;
                v[i] *= beta2;
                *w -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
            continue;
        };
        for (i, w) in p.data_mut().iter_mut().enumerate() {
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            *w -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Maps every entry into `[-c, c]`.
pub fn clip_weights(params: &mut [&mut Tensor], c: f64) {
    for p in params.iter_mut() {
        p.data_mut().iter_mut().for_each(|w| *w = w.clamp(-c, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::new(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        // the bias-corrected step is lr * g / (|g| + eps), within lr * 1e-6 once |g| >> 1e-2
        for g in [3.7, -0.5, 150.0] {
            let mut p = scalar(1.0);
            p.grad_mut()[0] = g;
            let mut st = AdamState::new(AdamConfig::new(1e-3, 0.5));
            adam_step(&mut [&mut p], &mut st).unwrap();
            let delta = p.data()[0] - 1.0;
            assert!((delta + 1e-3 * g.signum()).abs() < 1e-3 * 1e-6, "{delta}");
            assert_eq!(st.t, 1);
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = scalar(0.25);
        let mut st = AdamState::new(AdamConfig::new(0.1, 0.9));
        for _ in 0..10 {
            p.grad_mut()[0] = 0.0;
            adam_step(&mut [&mut p], &mut st).unwrap();
        }
        assert_eq!(p.data()[0], 0.25);
        assert_eq!(st.t, 10);
    }

    #[test]
    fn independent_parameters_do_not_interact() {
        let mut st = AdamState::new(AdamConfig::new(0.01, 0.5));
        let mut a = scalar(1.0);
        let mut b = scalar(1.0);
        a.grad_mut()[0] = 2.0;
        b.grad_mut()[0] = 0.0;
        adam_step(&mut [&mut a, &mut b], &mut st).unwrap();
        assert_eq!(b.data()[0], 1.0);

        let mut st2 = AdamState::new(AdamConfig::new(0.01, 0.5));
        let mut a2 = scalar(1.0);
        a2.grad_mut()[0] = 2.0;
        adam_step(&mut [&mut a2], &mut st2).unwrap();
        assert_eq!(a.data()[0], a2.data()[0]);
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = scalar(1.0);
        p.grad_mut()[0] = f64::NAN;
        let mut st = AdamState::new(AdamConfig::new(0.01, 0.5));
        assert!(matches!(
            adam_step(&mut [&mut p], &mut st),
            Err(Error::NonFiniteGradient)
        ));
        assert_eq!(p.data()[0], 1.0);
    }

    #[test]
    fn clipping_examples() {
        let mut p = Tensor::new(vec![3], vec![0.5, -1.0, 0.004]).unwrap();
        clip_weights(&mut [&mut p], 0.01);
        assert_eq!(p.data(), &[0.01, -0.01, 0.004]);
    }
}
