//! Forward/backward kernels for the layer set used by every network:
//! linear maps, LeakyReLU, batch normalization and row softmax.
//!
//! Forward passes return whatever the backward pass needs as an explicit
//! cache value, so one layer can be applied several times per step and
//! each application differentiated on its own.

use rand::Rng;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// How batch normalization treats its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Normalize with batch statistics and fold them into the running ones.
    Train,
    /// Normalize with batch statistics, leave the running ones untouched.
    BatchStats,
    /// Normalize with the running statistics.
    Eval,
}

impl Mode {
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, Mode::Eval)
    }
}

// ── Linear ───────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub weight: Tensor,
    /// `out`
    pub bias: Tensor,
}

impl Linear {
    /// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            weight: Tensor::new(vec![outputs, inputs], data).expect("shape"),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `y = x W^T + b`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.expect_matrix(self.inputs(), "linear_forward")?;
        let (b, i, o) = (x.rows(), self.inputs(), self.outputs());
        let mut y = Tensor::zeros(&[b, o]);
        for row in y.data_mut().chunks_exact_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(b, i, o, 1.0, x.data(), false, self.weight.data(), true, 1.0, y.data_mut());
        Ok(y)
    }

    /// Accumulates dW and db, returns dx.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        x.expect_matrix(self.inputs(), "linear_backward")?;
        grad_out.expect_matrix(self.outputs(), "linear_backward")?;
        if x.rows() != grad_out.rows() {
            return Err(Error::ShapeMismatch {
                op: "linear_backward",
                left: x.shape().to_vec(),
                right: grad_out.shape().to_vec(),
            });
        }
        let (b, i, o) = (x.rows(), self.inputs(), self.outputs());
        let mut dx = Tensor::zeros(&[b, i]);
        gemm(b, o, i, 1.0, grad_out.data(), false, self.weight.data(), false, 0.0, dx.data_mut());
        gemm(o, b, i, 1.0, grad_out.data(), true, x.data(), false, 1.0, self.weight.grad_mut());
        let db = self.bias.grad_mut();
        for row in grad_out.iter_rows() {
            for (g, v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
        Ok(dx)
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

// ── LeakyReLU ────────────────────────────────────────────────────────

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v >= 0.0 { v } else { slope * v })
}

/// Derivative is 1 at exactly zero.
pub fn leaky_relu_backward(x: &Tensor, grad_out: &Tensor, slope: f64) -> Result<Tensor> {
    x.check_same_shape(grad_out, "leaky_relu_backward")?;
    let mut dx = grad_out.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(x.data()) {
        if v < 0.0 {
            *d *= slope;
        }
    }
    Ok(dx)
}

// ── Batch normalization ──────────────────────────────────────────────

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl BatchNorm {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], 1.0),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let f = self.features();
        x.expect_matrix(f, "batchnorm_forward")?;
        let b = x.rows();
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mut y = Tensor::zeros(&[b, f]);

        if !mode.uses_batch_stats() {
            let inv_std: Vec<f64> = self
                .running_var
                .data()
                .iter()
                .map(|v| 1.0 / (v + self.eps).sqrt())
                .collect();
            let mean = self.running_mean.data();
            let mut x_hat = Tensor::zeros(&[b, f]);
            for ((hr, yr), xr) in x_hat
                .data_mut()
                .chunks_exact_mut(f)
                .zip(y.data_mut().chunks_exact_mut(f))
                .zip(x.iter_rows())
            {
                for j in 0..f {
                    hr[j] = (xr[j] - mean[j]) * inv_std[j];
                    yr[j] = gamma[j] * hr[j] + beta[j];
                }
            }
            let cache = BatchNormCache {
                x_hat,
                inv_std,
                batch_stats: false,
            };
            return Ok((y, cache));
        }

        if b < 2 {
            return Err(Error::BatchTooSmall(b));
        }
        let mut mean = vec![0.0; f];
        for xr in x.iter_rows() {
            for (m, v) in mean.iter_mut().zip(xr) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= b as f64);
        let mut var = vec![0.0; f];
        for xr in x.iter_rows() {
            for j in 0..f {
                let d = xr[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= b as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut x_hat = Tensor::zeros(&[b, f]);
        for ((hr, yr), xr) in x_hat
            .data_mut()
            .chunks_exact_mut(f)
            .zip(y.data_mut().chunks_exact_mut(f))
            .zip(x.iter_rows())
        {
            for j in 0..f {
                hr[j] = (xr[j] - mean[j]) * inv_std[j];
                yr[j] = gamma[j] * hr[j] + beta[j];
            }
        }

        if mode == Mode::Train {
            // running variance tracks the unbiased estimate
            let unbias = b as f64 / (b as f64 - 1.0);
            let m = self.momentum;
            for (r, v) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                *r = (1.0 - m) * *r + m * v;
            }
            for (r, v) in self.running_var.data_mut().iter_mut().zip(&var) {
                *r = (1.0 - m) * *r + m * v * unbias;
            }
        }
        let cache = BatchNormCache {
            x_hat,
            inv_std,
            batch_stats: true,
        };
        Ok((y, cache))
    }

    /// Accumulates dgamma and dbeta, returns dx. With batch statistics the
    /// gradient flows through the batch mean and variance.
    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        let f = self.features();
        grad_out.expect_matrix(f, "batchnorm_backward")?;
        let b = grad_out.rows();
        let gamma = self.gamma.data().to_vec();
        let BatchNormCache {
            x_hat,
            inv_std,
            batch_stats,
        } = cache;
        if x_hat.rows() != b {
            return Err(Error::ShapeMismatch {
                op: "batchnorm_backward",
                left: x_hat.shape().to_vec(),
                right: grad_out.shape().to_vec(),
            });
        }
        let mut sum_g = vec![0.0; f];
        let mut sum_gx = vec![0.0; f];
        for (gr, hr) in grad_out.iter_rows().zip(x_hat.iter_rows()) {
            for j in 0..f {
                sum_g[j] += gr[j];
                sum_gx[j] += gr[j] * hr[j];
            }
        }
        let mut dx = Tensor::zeros(&[b, f]);
        let n = b as f64;
        for ((dr, gr), hr) in dx
            .data_mut()
            .chunks_exact_mut(f)
            .zip(grad_out.iter_rows())
            .zip(x_hat.iter_rows())
        {
            for j in 0..f {
                dr[j] = if *batch_stats {
                    gamma[j] * inv_std[j] / n * (n * gr[j] - sum_g[j] - hr[j] * sum_gx[j])
                } else {
                    gamma[j] * inv_std[j] * gr[j]
                };
            }
        }
        for (g, s) in self.gamma.grad_mut().iter_mut().zip(&sum_gx) {
            *g += s;
        }
        for (g, s) in self.beta.grad_mut().iter_mut().zip(&sum_g) {
            *g += s;
        }
        Ok(dx)
    }

    pub fn parameter_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

// ── Softmax ──────────────────────────────────────────────────────────

pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    let c = y.cols();
    for row in y.data_mut().chunks_exact_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    y
}

/// Vector-Jacobian product of the row softmax given its output `y`.
pub fn softmax_rows_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    y.check_same_shape(grad_out, "softmax_backward")?;
    let c = y.cols();
    let mut dx = Tensor::zeros(y.shape());
    for ((dr, yr), gr) in dx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(y.iter_rows())
        .zip(grad_out.iter_rows())
    {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..c {
            dr[j] = yr[j] * (gr[j] - dot);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_linear_is_passthrough() {
        let lin = Linear {
            weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
            bias: Tensor::zeros(&[2]),
        };
        let x = Tensor::matrix(2, 2, vec![0.3, -1.0, 2.0, 5.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap(), x);
    }

    #[test]
    fn linear_dot_product_example() {
        let lin = Linear {
            weight: Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap(),
            bias: Tensor::new(vec![1], vec![3.0]).unwrap(),
        };
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn linear_bias_grad_of_sum_is_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut lin = Linear::init(3, 2, &mut rng);
        let x = Tensor::matrix(4, 3, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        lin.backward(&x, &Tensor::filled(&[4, 2], 1.0)).unwrap();
        assert_eq!(lin.bias.grad().unwrap(), &[4.0, 4.0]);
    }

    #[test]
    fn linear_rejects_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::init(3, 2, &mut rng);
        assert!(lin.forward(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn leaky_relu_examples() {
        let x = Tensor::new(vec![1, 3], vec![-1.0, 2.0, 0.0]).unwrap();
        assert_eq!(leaky_relu(&x, 0.1).data(), &[-0.1, 2.0, 0.0]);
        let g = leaky_relu_backward(&x, &Tensor::filled(&[1, 3], 1.0), 0.1).unwrap();
        assert_eq!(g.data(), &[0.1, 1.0, 1.0]);
    }

    #[test]
    fn batchnorm_constant_column_yields_beta() {
        let mut bn = BatchNorm::new(2);
        bn.beta.data_mut().copy_from_slice(&[0.7, -0.2]);
        let x = Tensor::matrix(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 3.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for r in y.iter_rows() {
            assert!((r[0] - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn batchnorm_train_needs_two_rows() {
        let mut bn = BatchNorm::new(2);
        let x = Tensor::zeros(&[1, 2]);
        assert!(matches!(bn.forward(&x, Mode::Train), Err(Error::BatchTooSmall(1))));
        assert!(bn.forward(&x, Mode::Eval).is_ok());
    }

    #[test]
    fn batchnorm_stats_modes() {
        let x = Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap();
        let mut bn = BatchNorm::new(1);
        bn.forward(&x, Mode::BatchStats).unwrap();
        assert_eq!(bn.running_mean.data(), &[0.0]);
        assert_eq!(bn.running_var.data(), &[1.0]);
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-15);
        // unbiased batch variance is 2
        assert!((bn.running_var.data()[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn softmax_symmetry_and_shift() {
        let x = Tensor::matrix(2, 2, vec![0.0, 0.0, 1e3, 1e3]).unwrap();
        let y = softmax_rows(&x);
        assert_eq!(y.data(), &[0.5, 0.5, 0.5, 0.5]);
        let x = Tensor::matrix(1, 4, vec![-7.5; 4]).unwrap();
        assert_eq!(softmax_rows(&x).data(), &[0.25; 4]);
    }
}
