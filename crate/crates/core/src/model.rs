//! The five networks and the Dirichlet prior.
//!
//! Every network is the same two-layer stack
//! `Linear(in, H) -> LeakyReLU(0.1) -> BatchNorm(H) -> Linear(H, out)`,
//! optionally followed by a row softmax:
//!
//! | network    | in | out | head     |
//! |------------|----|-----|----------|
//! | encoder    | V  | K   | softmax  |
//! | generator  | K  | V   | softmax  |
//! | critic X   | V  | 1   | identity |
//! | critic Z   | K  | 1   | identity |
//! | classifier | K  | L   | softmax  |

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::ndmath::{
    leaky_relu, leaky_relu_backward, softmax_rows, softmax_rows_backward, BatchNorm,
    BatchNormCache, Linear, Mode, Tensor,
};

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetworkKind {
    Encoder,
    Generator,
    CriticX,
    CriticZ,
    Classifier,
}

impl NetworkKind {
    pub fn name(self) -> &'static str {
        match self {
            NetworkKind::Encoder => "encoder",
            NetworkKind::Generator => "generator",
            NetworkKind::CriticX => "critic_x",
            NetworkKind::CriticZ => "critic_z",
            NetworkKind::Classifier => "classifier",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [
            NetworkKind::Encoder,
            NetworkKind::Generator,
            NetworkKind::CriticX,
            NetworkKind::CriticZ,
            NetworkKind::Classifier,
        ]
        .into_iter()
        .find(|k| k.name() == name)
    }

    pub fn has_softmax(self) -> bool {
        !matches!(self, NetworkKind::CriticX | NetworkKind::CriticZ)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    kind: NetworkKind,
    pub hidden: Linear,
    pub norm: BatchNorm,
    pub output: Linear,
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Trace {
    input: Tensor,
    pre_activation: Tensor,
    norm: BatchNormCache,
    normalized: Tensor,
    output: Tensor,
}

impl Trace {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

impl Network {
    pub fn new<R: Rng + ?Sized>(
        kind: NetworkKind,
        inputs: usize,
        hidden: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            kind,
            hidden: Linear::init(inputs, hidden, rng),
            norm: BatchNorm::new(hidden),
            output: Linear::init(hidden, outputs, rng),
        }
    }

    pub fn encoder<R: Rng + ?Sized>(vocab: usize, hidden: usize, topics: usize, rng: &mut R) -> Self {
        Self::new(NetworkKind::Encoder, vocab, hidden, topics, rng)
    }

    pub fn generator<R: Rng + ?Sized>(topics: usize, hidden: usize, vocab: usize, rng: &mut R) -> Self {
        Self::new(NetworkKind::Generator, topics, hidden, vocab, rng)
    }

    pub fn critic_x<R: Rng + ?Sized>(vocab: usize, hidden: usize, rng: &mut R) -> Self {
        Self::new(NetworkKind::CriticX, vocab, hidden, 1, rng)
    }

    pub fn critic_z<R: Rng + ?Sized>(topics: usize, hidden: usize, rng: &mut R) -> Self {
        Self::new(NetworkKind::CriticZ, topics, hidden, 1, rng)
    }

    pub fn classifier<R: Rng + ?Sized>(topics: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self::new(NetworkKind::Classifier, topics, hidden, classes, rng)
    }

    /// Assembles a network from already-built layers (checkpoint loading).
    pub fn from_parts(kind: NetworkKind, hidden: Linear, norm: BatchNorm, output: Linear) -> Result<Self> {
        if hidden.outputs() != norm.features() || output.inputs() != norm.features() {
            return Err(Error::ShapeMismatch {
                op: "network",
                left: vec![hidden.outputs(), norm.features()],
                right: vec![output.inputs()],
            });
        }
        Ok(Self {
            kind,
            hidden,
            norm,
            output,
        })
    }

    pub fn kind(&self) -> NetworkKind {
        self.kind
    }

    pub fn inputs(&self) -> usize {
        self.hidden.inputs()
    }

    pub fn hidden_units(&self) -> usize {
        self.norm.features()
    }

    pub fn outputs(&self) -> usize {
        self.output.outputs()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Trace> {
        let pre_activation = self.hidden.forward(x)?;
        let activation = leaky_relu(&pre_activation, LEAKY_SLOPE);
        let (normalized, norm) = self.norm.forward(&activation, mode)?;
        let logits = self.output.forward(&normalized)?;
        let output = if self.kind.has_softmax() {
            softmax_rows(&logits)
        } else {
            logits
        };
        Ok(Trace {
            input: x.clone(),
            pre_activation,
            norm,
            normalized,
            output,
        })
    }

    /// Eval-mode forward pass; needs no mutable access.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut shadow = self.norm.clone();
        let pre = self.hidden.forward(x)?;
        let (normalized, _) = shadow.forward(&leaky_relu(&pre, LEAKY_SLOPE), Mode::Eval)?;
        let logits = self.output.forward(&normalized)?;
        Ok(if self.kind.has_softmax() {
            softmax_rows(&logits)
        } else {
            logits
        })
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the network output)
    /// through a recorded pass, accumulating parameter gradients, and
    /// returns the gradient w.r.t. the input.
    pub fn backward(&mut self, trace: &Trace, grad_out: &Tensor) -> Result<Tensor> {
        let d_logits = if self.kind.has_softmax() {
            softmax_rows_backward(&trace.output, grad_out)?
        } else {
            trace.output.check_same_shape(grad_out, "network_backward")?;
            grad_out.clone()
        };
        let d_norm = self.output.backward(&trace.normalized, &d_logits)?;
        let d_act = self.norm.backward(&trace.norm, &d_norm)?;
        let d_pre = leaky_relu_backward(&trace.pre_activation, &d_act, LEAKY_SLOPE)?;
        self.hidden.backward(&trace.input, &d_pre)
    }

    /// Trainable tensors in a fixed order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.norm.gamma,
            &mut self.norm.beta,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    /// Every stored tensor (parameters and batch-norm statistics), named.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("hidden.weight", &self.hidden.weight),
            ("hidden.bias", &self.hidden.bias),
            ("norm.gamma", &self.norm.gamma),
            ("norm.beta", &self.norm.beta),
            ("norm.running_mean", &self.norm.running_mean),
            ("norm.running_var", &self.norm.running_var),
            ("output.weight", &self.output.weight),
            ("output.bias", &self.output.bias),
        ]
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Tensor::zero_grad);
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden.parameter_count() + self.norm.parameter_count() + self.output.parameter_count()
    }

    /// Largest absolute trainable entry.
    pub fn max_abs_param(&self) -> f64 {
        [
            &self.hidden.weight,
            &self.hidden.bias,
            &self.norm.gamma,
            &self.norm.beta,
            &self.output.weight,
            &self.output.bias,
        ]
        .iter()
        .fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

fn run(net: &mut Network, kind: NetworkKind, x: &Tensor, mode: Mode) -> Result<Tensor> {
    if net.kind() != kind {
        return Err(Error::InvalidArgument(format!(
            "expected a {} network, got {}",
            kind.name(),
            net.kind().name()
        )));
    }
    Ok(net.forward(x, mode)?.output)
}

/// `batch x V` word distributions to `batch x K` topic distributions.
pub fn encode(encoder: &mut Network, x: &Tensor, mode: Mode) -> Result<Tensor> {
    run(encoder, NetworkKind::Encoder, x, mode)
}

/// `batch x K` topic distributions to `batch x V` word distributions.
pub fn generate(generator: &mut Network, z: &Tensor, mode: Mode) -> Result<Tensor> {
    run(generator, NetworkKind::Generator, z, mode)
}

/// Unsquashed critic scores, `batch x 1`.
pub fn criticize(critic: &mut Network, s: &Tensor, mode: Mode) -> Result<Tensor> {
    if !matches!(critic.kind(), NetworkKind::CriticX | NetworkKind::CriticZ) {
        return Err(Error::InvalidArgument(format!(
            "expected a critic, got {}",
            critic.kind().name()
        )));
    }
    Ok(critic.forward(s, mode)?.output)
}

/// Class probabilities, `batch x L`.
pub fn classify(classifier: &mut Network, z: &Tensor, mode: Mode) -> Result<Tensor> {
    run(classifier, NetworkKind::Classifier, z, mode)
}

// ── Prior ────────────────────────────────────────────────────────────

const MAX_PRIOR_RETRIES: usize = 100;

/// Symmetric Dirichlet(alpha, ..., alpha) over the topic simplex.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletPrior {
    pub topics: usize,
    pub alpha: f64,
}

impl DirichletPrior {
    pub fn new(topics: usize, alpha: f64) -> Result<Self> {
        if topics == 0 || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "dirichlet prior needs topics >= 1 and alpha > 0 (got {topics}, {alpha})"
            )));
        }
        Ok(Self { topics, alpha })
    }

    /// `batch` rows, each K normalized Gamma(alpha, 1) draws.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Tensor> {
        if batch == 0 {
            return Err(Error::InvalidArgument("prior batch must be >= 1".into()));
        }
        // shape < 1 is drawn as Gamma(alpha + 1) * U^(1/alpha)
        let gamma = Gamma::new(self.alpha, 1.0)
            .map_err(|e| Error::InvalidArgument(format!("gamma: {e}")))?;
        let k = self.topics;
        let mut out = Tensor::zeros(&[batch, k]);
        for row in out.data_mut().chunks_exact_mut(k) {
            let mut attempt = 0;
            loop {
                let mut sum = 0.0;
                for v in row.iter_mut() {
                    *v = gamma.sample(rng);
                    sum += *v;
                }
                if sum > 0.0 && sum.is_finite() {
                    row.iter_mut().for_each(|v| *v /= sum);
                    break;
                }
                attempt += 1;
                if attempt >= MAX_PRIOR_RETRIES {
                    return Err(Error::DegenerateSample(MAX_PRIOR_RETRIES));
                }
            }
        }
        Ok(out)
    }
}

// ── Topic discovery ──────────────────────────────────────────────────

/// Row k is the generator's eval-mode output for the one-hot topic k.
pub fn topic_word_distributions(generator: &Network) -> Result<Tensor> {
    let k = generator.inputs();
    let mut probes = Tensor::zeros(&[k, k]);
    for i in 0..k {
        probes.row_mut(i)[i] = 1.0;
    }
    generator.predict(&probes)
}

/// Word ids of the `n` largest entries, descending; ties by ascending id.
pub fn top_word_ids(distribution: &[f64], n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > distribution.len() {
        return Err(Error::InvalidArgument(format!(
            "top-n must be in 1..={}, got {n}",
            distribution.len()
        )));
    }
    let mut ids: Vec<usize> = (0..distribution.len()).collect();
    ids.sort_by(|&a, &b| distribution[b].total_cmp(&distribution[a]).then(a.cmp(&b)));
    ids.truncate(n);
    Ok(ids)
}

pub fn top_words(distribution: &[f64], vocab: &Vocabulary, n: usize) -> Result<Vec<String>> {
    if distribution.len() != vocab.len() {
        return Err(Error::ShapeMismatch {
            op: "top_words",
            left: vec![distribution.len()],
            right: vec![vocab.len()],
        });
    }
    Ok(top_word_ids(distribution, n)?
        .into_iter()
        .map(|id| vocab.token(id).to_owned())
        .collect())
}
