//! Finite-difference gradient cases shared by the gradient tests and the
//! acceptance suite. Each case draws one random instance and returns the
//! relative error between the analytic and the numeric gradient.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tomcat_core::model::{Network, NetworkKind};
use tomcat_core::ndmath::gradcheck::{numeric_gradient, relative_error, FD_STEP};
use tomcat_core::ndmath::{
    cross_entropy, cross_entropy_backward, l1_loss, l1_loss_backward, leaky_relu, leaky_relu_backward,
    softmax_rows, softmax_rows_backward, BatchNorm, Linear, Mode, Tensor,
};
use tomcat_core::training::{critic_gradients, mapper_gradients, LossWeights, Networks};

pub const LAYER_TOLERANCE: f64 = 1e-4;
pub const COMPOSITE_TOLERANCE: f64 = 1e-3;
pub const INSTANCES: usize = 100;

const FLOOR: f64 = 1e-8;

pub type Case = fn(&mut ChaCha8Rng) -> f64;

pub fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(vec![n], (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn simplex_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    softmax_rows(&uniform(rng, rows, cols, -2.0, 2.0))
}

/// `(batch, inputs, outputs)` with every dimension at most 8.
fn dims(rng: &mut ChaCha8Rng) -> (usize, usize, usize) {
    (rng.random_range(2..=6), rng.random_range(1..=8), rng.random_range(1..=8))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn split<'a>(v: &'a [f64], sizes: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut rest = v;
    for &n in sizes {
        let (head, tail) = rest.split_at(n);
        out.push(head);
        rest = tail;
    }
    out
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape().to_vec(), data.to_vec()).unwrap()
}

fn concat(parts: &[&[f64]]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn compare(analytic: &[f64], point: &[f64], f: impl FnMut(&[f64]) -> f64) -> f64 {
    relative_error(analytic, &numeric_gradient(f, point, FD_STEP), FLOOR)
}

// ── networks ─────────────────────────────────────────────────────────

pub fn flat_params(net: &mut Network) -> Vec<f64> {
    net.params_mut().iter().flat_map(|p| p.data().to_vec()).collect()
}

pub fn flat_grads(net: &mut Network) -> Vec<f64> {
    net.params_mut()
        .iter()
        .flat_map(|p| p.grad().map_or(vec![0.0; p.len()], <[f64]>::to_vec))
        .collect()
}

/// Writes `values` into the trainable tensors; returns the unused tail.
pub fn assign_params<'a>(net: &mut Network, values: &'a [f64]) -> &'a [f64] {
    let mut rest = values;
    for p in net.params_mut() {
        let (head, tail) = rest.split_at(p.len());
        p.data_mut().copy_from_slice(head);
        rest = tail;
    }
    rest
}

/// Moves batch-norm affine parameters and biases away from their
/// initialization so every path carries gradient.
pub fn perturb(net: &mut Network, rng: &mut ChaCha8Rng) {
    let h = net.hidden_units();
    net.norm.gamma = vector(rng, h, 0.5, 1.5);
    net.norm.beta = vector(rng, h, -0.5, 0.5);
    net.hidden.bias = vector(rng, h, -0.2, 0.2);
    net.output.bias = vector(rng, net.outputs(), -0.2, 0.2);
    net.norm.running_mean = vector(rng, h, -0.5, 0.5);
    net.norm.running_var = vector(rng, h, 0.5, 2.0);
}

// ── layer cases ──────────────────────────────────────────────────────

fn linear_case(rng: &mut ChaCha8Rng) -> f64 {
    let (b, i, o) = dims(rng);
    let x = uniform(rng, b, i, -1.0, 1.0);
    let mut lin = Linear::init(i, o, rng);
    lin.bias = vector(rng, o, -1.0, 1.0);
    let r = uniform(rng, b, o, -1.0, 1.0);

    let mut l = lin.clone();
    let dx = l.backward(&x, &r).unwrap();
    let analytic = concat(&[dx.data(), l.weight.grad().unwrap(), l.bias.grad().unwrap()]);
    let point = concat(&[x.data(), lin.weight.data(), lin.bias.data()]);
    compare(&analytic, &point, |v| {
        let p = split(v, &[b * i, o * i]);
        let mut l = lin.clone();
        l.weight = with_data(&lin.weight, p[1]);
        l.bias = with_data(&lin.bias, &v[b * i + o * i..]);
        dot(&l.forward(&with_data(&x, p[0])).unwrap(), &r)
    })
}

fn leaky_case(rng: &mut ChaCha8Rng) -> f64 {
    let (b, i, _) = dims(rng);
    let x = uniform(rng, b, i, -1.0, 1.0);
    let r = uniform(rng, b, i, -1.0, 1.0);
    let dx = leaky_relu_backward(&x, &r, 0.1).unwrap();
    compare(dx.data(), x.data(), |v| dot(&leaky_relu(&with_data(&x, v), 0.1), &r))
}

fn batchnorm_case(mode: Mode, rng: &mut ChaCha8Rng) -> f64 {
    let (b, f, _) = dims(rng);
    let x = uniform(rng, b, f, -1.0, 1.0);
    let r = uniform(rng, b, f, -1.0, 1.0);
    let mut bn = BatchNorm::new(f);
    bn.gamma = vector(rng, f, 0.5, 1.5);
    bn.beta = vector(rng, f, -0.5, 0.5);
    bn.running_mean = vector(rng, f, -0.5, 0.5);
    bn.running_var = vector(rng, f, 0.5, 2.0);

    let mut l = bn.clone();
    let (_, cache) = l.forward(&x, mode).unwrap();
    let dx = l.backward(&cache, &r).unwrap();
    let analytic = concat(&[dx.data(), l.gamma.grad().unwrap(), l.beta.grad().unwrap()]);
    let point = concat(&[x.data(), bn.gamma.data(), bn.beta.data()]);
    compare(&analytic, &point, |v| {
        let p = split(v, &[b * f, f, f]);
        let mut l = bn.clone();
        l.gamma = with_data(&bn.gamma, p[1]);
        l.beta = with_data(&bn.beta, p[2]);
        dot(&l.forward(&with_data(&x, p[0]), mode).unwrap().0, &r)
    })
}

fn batchnorm_batch_case(rng: &mut ChaCha8Rng) -> f64 {
    batchnorm_case(Mode::BatchStats, rng)
}

fn batchnorm_eval_case(rng: &mut ChaCha8Rng) -> f64 {
    batchnorm_case(Mode::Eval, rng)
}

fn softmax_case(rng: &mut ChaCha8Rng) -> f64 {
    let (b, i, _) = dims(rng);
    let x = uniform(rng, b, i, -2.0, 2.0);
    let r = uniform(rng, b, i, -1.0, 1.0);
    let dx = softmax_rows_backward(&softmax_rows(&x), &r).unwrap();
    compare(dx.data(), x.data(), |v| dot(&softmax_rows(&with_data(&x, v)), &r))
}

fn l1_case(rng: &mut ChaCha8Rng) -> f64 {
    let (b, i, _) = dims(rng);
    let a = uniform(rng, b, i, -1.0, 1.0);
    let t = uniform(rng, b, i, -1.0, 1.0);
    let da = l1_loss_backward(&a, &t).unwrap();
    compare(da.data(), a.data(), |v| l1_loss(&with_data(&a, v), &t).unwrap())
}

fn cross_entropy_case(rng: &mut ChaCha8Rng) -> f64 {
    let (b, _, c) = dims(rng);
    let p = uniform(rng, b, c, 0.05, 1.0);
    let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
    let dp = cross_entropy_backward(&p, &y).unwrap();
    compare(dp.data(), p.data(), |v| cross_entropy(&with_data(&p, v), &y).unwrap())
}

fn network_case(rng: &mut ChaCha8Rng) -> f64 {
    let kinds = [
        NetworkKind::Encoder,
        NetworkKind::Generator,
        NetworkKind::CriticX,
        NetworkKind::CriticZ,
        NetworkKind::Classifier,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let (b, i, o) = dims(rng);
    let h = rng.random_range(1..=8);
    let o = if kind.has_softmax() { o } else { 1 };
    let mut net = Network::new(kind, i, h, o, rng);
    perturb(&mut net, rng);
    let x = uniform(rng, b, i, -1.0, 1.0);
    let r = uniform(rng, b, o, -1.0, 1.0);

    let mut n = net.clone();
    let trace = n.forward(&x, Mode::BatchStats).unwrap();
    let dx = n.backward(&trace, &r).unwrap();
    let analytic = concat(&[dx.data(), &flat_grads(&mut n)]);
    let point = concat(&[x.data(), &flat_params(&mut net)]);
    compare(&analytic, &point, |v| {
        let mut n = net.clone();
        assign_params(&mut n, &v[b * i..]);
        let out = n.forward(&with_data(&x, &v[..b * i]), Mode::BatchStats).unwrap();
        dot(out.output(), &r)
    })
}

/// Every layer and loss backward pass, by name.
pub fn layer_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("linear", linear_case),
        ("leaky_relu", leaky_case),
        ("batchnorm_batch_stats", batchnorm_batch_case),
        ("batchnorm_eval", batchnorm_eval_case),
        ("softmax", softmax_case),
        ("l1_loss", l1_case),
        ("cross_entropy", cross_entropy_case),
        ("network", network_case),
    ]
}

/// Worst relative error of `case` over `INSTANCES` seeded draws.
pub fn worst_error(case: Case, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..INSTANCES).map(|_| case(&mut rng)).fold(0.0, f64::max)
}

// ── composite objectives ─────────────────────────────────────────────

pub struct Point {
    pub nets: Networks,
    pub x: Tensor,
    pub z: Tensor,
    pub labels: Vec<usize>,
    pub lambdas: [f64; 3],
}

/// Supervised model with V = 6, K = 3, H = 4, L = 3 and a batch of 5.
pub fn random_point(seed: u64) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = Networks::init(6, 3, 4, 3, &mut rng);
    perturb(&mut nets.encoder, &mut rng);
    perturb(&mut nets.generator, &mut rng);
    perturb(&mut nets.critic_x, &mut rng);
    perturb(&mut nets.critic_z, &mut rng);
    perturb(nets.classifier.as_mut().unwrap(), &mut rng);
    let x = simplex_rows(&mut rng, 5, 6);
    let z = simplex_rows(&mut rng, 5, 3);
    let labels = (0..5).map(|_| rng.random_range(0..3)).collect();
    let lambdas = [rng.random_range(0.5..3.0), rng.random_range(0.1..1.0), rng.random_range(0.5..2.0)];
    Point {
        nets,
        x,
        z,
        labels,
        lambdas,
    }
}

fn mapper_total(p: &Point, nets: &mut Networks) -> f64 {
    mapper_gradients(
        nets.mapper_nets(),
        &p.x,
        &p.z,
        Some(&p.labels),
        LossWeights::Fixed { lambdas: p.lambdas },
        Mode::BatchStats,
    )
    .unwrap()
    .total
}

/// Relative error of the encoder, generator and classifier gradients of
/// the weighted total objective.
pub fn mapper_objective_error(seed: u64) -> f64 {
    let mut p = random_point(seed);
    let mut nets = p.nets.clone();
    mapper_total(&p, &mut nets);
    let analytic = concat(&[
        &flat_grads(&mut nets.encoder),
        &flat_grads(&mut nets.generator),
        &flat_grads(nets.classifier.as_mut().unwrap()),
    ]);
    let point = concat(&[
        &flat_params(&mut p.nets.encoder),
        &flat_params(&mut p.nets.generator),
        &flat_params(p.nets.classifier.as_mut().unwrap()),
    ]);
    compare(&analytic, &point, |v| {
        let mut nets = p.nets.clone();
        let rest = assign_params(&mut nets.encoder, v);
        let rest = assign_params(&mut nets.generator, rest);
        assign_params(nets.classifier.as_mut().unwrap(), rest);
        mapper_total(&p, &mut nets)
    })
}

/// Relative error of both critics' gradients of `-(gap_x + gap_z)`.
pub fn critic_objective_error(seed: u64) -> f64 {
    let mut p = random_point(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let x_fake = simplex_rows(&mut rng, 5, 6);
    let z_fake = simplex_rows(&mut rng, 5, 3);
    let loss = |nets: &mut Networks| {
        let t = critic_gradients(&mut nets.critic_x, &mut nets.critic_z, &p.x, &x_fake, &p.z, &z_fake).unwrap();
        -(t.gap_x + t.gap_z)
    };
    let mut nets = p.nets.clone();
    loss(&mut nets);
    let analytic = concat(&[&flat_grads(&mut nets.critic_x), &flat_grads(&mut nets.critic_z)]);
    let point = concat(&[&flat_params(&mut p.nets.critic_x), &flat_params(&mut p.nets.critic_z)]);
    compare(&analytic, &point, |v| {
        let mut nets = p.nets.clone();
        let rest = assign_params(&mut nets.critic_x, v);
        assign_params(&mut nets.critic_z, rest);
        loss(&mut nets)
    })
}

/// Bit patterns of every stored tensor of `net`, for exact comparisons.
pub fn bits(net: &Network) -> Vec<u64> {
    net.tensors()
        .iter()
        .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
        .collect()
}
