//! Adversarial, cycle-consistent training.
//!
//! Each iteration runs `critic_steps` critic updates (fresh data and prior
//! batches each, weight clipping after every update) followed by one update
//! of the encoder and generator (plus the classifier when supervised) on the
//! adversarial, cycle and classification losses. Auxiliary loss weights are
//! rebalanced every mapper step from gradient norms at the shared
//! activations.

mod config;
mod objective;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::TrainConfig;
pub use objective::{
    adv_loss_x, adv_loss_z, balance, critic_gradients, cycle_losses, mapper_gradients,
    wasserstein_gap, weighted_total, CriticTerms, LossWeights, MapperNets, MapperTerms,
    BALANCE_EPS,
};

use crate::error::{Error, Result};
use crate::model::{DirichletPrior, Network};
use crate::ndmath::{adam_step, clip_weights, AdamConfig, AdamState, Mode, Tensor};

/// The five networks of a (supervised) model.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub encoder: Network,
    pub generator: Network,
    pub critic_x: Network,
    pub critic_z: Network,
    pub classifier: Option<Network>,
}

impl Networks {
    /// Freshly initialized networks; a classifier is built iff `classes > 0`.
    pub fn init(vocab: usize, topics: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        let encoder = Network::encoder(vocab, hidden, topics, rng);
        let generator = Network::generator(topics, hidden, vocab, rng);
        let critic_x = Network::critic_x(vocab, hidden, rng);
        let critic_z = Network::critic_z(topics, hidden, rng);
        let classifier = (classes > 0).then(|| Network::classifier(topics, hidden, classes, rng));
        Self {
            encoder,
            generator,
            critic_x,
            critic_z,
            classifier,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn topics(&self) -> usize {
        self.encoder.outputs()
    }

    pub fn hidden(&self) -> usize {
        self.encoder.hidden_units()
    }

    pub fn classes(&self) -> usize {
        self.classifier.as_ref().map_or(0, Network::outputs)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Network> {
        [&self.encoder, &self.generator, &self.critic_x, &self.critic_z]
            .into_iter()
            .chain(self.classifier.as_ref())
    }

    pub fn mapper_nets(&mut self) -> MapperNets<'_> {
        MapperNets {
            encoder: &mut self.encoder,
            generator: &mut self.generator,
            critic_x: &mut self.critic_x,
            critic_z: &mut self.critic_z,
            classifier: self.classifier.as_mut(),
        }
    }
}

/// Adam states; the main group shares one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizers {
    pub encoder: AdamState,
    pub generator: AdamState,
    pub critic_x: AdamState,
    pub critic_z: AdamState,
    pub classifier: AdamState,
}

impl Optimizers {
    fn new(config: &TrainConfig) -> Self {
        let main = AdamState::new(AdamConfig::new(config.lr_main, config.beta1_main));
        Self {
            encoder: main.clone(),
            generator: main.clone(),
            critic_x: main.clone(),
            critic_z: main,
            classifier: AdamState::new(AdamConfig::new(config.lr_cls, config.beta1_cls)),
        }
    }
}

/// One row of the loss log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    /// Word-space Wasserstein estimate at the last critic step.
    pub critic_x: f64,
    /// Topic-space Wasserstein estimate at the last critic step.
    pub critic_z: f64,
    pub adv_x: f64,
    pub adv_z: f64,
    pub cyc_forward: f64,
    pub cyc_backward: f64,
    pub cls: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Largest absolute critic parameter after the critic phase.
    pub critic_max_abs: f64,
}

impl LossRecord {
    pub const HEADER: &'static str = "iteration\tcritic_x\tcritic_z\tadv_x\tadv_z\tcyc_forward\tcyc_backward\tcls\ttotal\tlambda1\tlambda2\tlambda3";

    pub fn to_tsv(&self) -> String {
        let vals = [
            self.critic_x,
            self.critic_z,
            self.adv_x,
            self.adv_z,
            self.cyc_forward,
            self.cyc_backward,
            self.cls,
            self.total,
            self.lambda1,
            self.lambda2,
            self.lambda3,
        ];
        let mut s = self.iteration.to_string();
        for v in vals {
            s.push('\t');
            s.push_str(&format_sig(v, 9));
        }
        s
    }
}

/// `v` printed with `digits` significant digits.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.prec$e}", prec = digits - 1)
    }
}

pub fn write_loss_log(records: &[LossRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", LossRecord::HEADER)?;
    for r in records {
        writeln!(out, "{}", r.to_tsv())?;
    }
    Ok(())
}

/// Training rows (and labels for the supervised model).
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub rows: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl TrainingData {
    pub fn new(rows: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != rows.rows() {
                return Err(Error::LabelMismatch {
                    docs: rows.rows(),
                    labels: l.len(),
                });
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shuffled passes over the document indices.
#[derive(Clone, Debug, PartialEq)]
struct Batcher {
    order: Vec<usize>,
    pos: usize,
}

impl Batcher {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.pos + batch > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let idx = self.order[self.pos..self.pos + batch].to_vec();
        self.pos += batch;
        idx
    }
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFiniteLoss { term, .. } => Error::NonFiniteLoss { iteration, term },
        other => other,
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub nets: Networks,
    pub optim: Optimizers,
    pub prior: DirichletPrior,
    pub iter: usize,
    pub loss_log: Vec<LossRecord>,
    rng: ChaCha8Rng,
    batcher: Batcher,
}

impl TrainState {
    /// Initializes networks for `vocab` words (and `classes` labels when
    /// the config is supervised) from the config seed.
    pub fn new(config: TrainConfig, vocab: usize, classes: usize, docs: usize) -> Result<Self> {
        config.validate()?;
        if vocab < 2 {
            return Err(Error::VocabularyTooSmall(vocab));
        }
        if config.supervised && classes == 0 {
            return Err(Error::Config("supervised training needs labels".into()));
        }
        if docs < config.batch_size {
            return Err(Error::TooFewDocuments {
                needed: config.batch_size,
                got: docs,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let classes = if config.supervised { classes } else { 0 };
        let nets = Networks::init(vocab, config.topics, config.hidden, classes, &mut rng);
        Ok(Self {
            optim: Optimizers::new(&config),
            prior: DirichletPrior::new(config.topics, config.alpha)?,
            nets,
            config,
            iter: 0,
            loss_log: Vec::new(),
            rng,
            batcher: Batcher::new(docs),
        })
    }

    fn next_batch(&mut self, data: &TrainingData) -> (Tensor, Option<Vec<usize>>) {
        let idx = self.batcher.next(self.config.batch_size, &mut self.rng);
        let x = data.rows.select_rows(&idx);
        let y = data
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        (x, y)
    }

    pub fn sample_prior(&mut self, batch: usize) -> Result<Tensor> {
        self.prior.sample(batch, &mut self.rng)
    }

    /// One critic update on the given batches.
    pub fn critic_step(&mut self, x: &Tensor, z: &Tensor) -> Result<CriticTerms> {
        let nets = &mut self.nets;
        let x_fake = nets.generator.forward(z, Mode::BatchStats)?.output().clone();
        let z_fake = nets.encoder.forward(x, Mode::BatchStats)?.output().clone();
        nets.critic_x.zero_grad();
        nets.critic_z.zero_grad();
        let terms = critic_gradients(&mut nets.critic_x, &mut nets.critic_z, x, &x_fake, z, &z_fake)?;
        adam_step(&mut nets.critic_x.params_mut(), &mut self.optim.critic_x)?;
        adam_step(&mut nets.critic_z.params_mut(), &mut self.optim.critic_z)?;
        clip_weights(&mut nets.critic_x.params_mut(), self.config.clip);
        clip_weights(&mut nets.critic_z.params_mut(), self.config.clip);
        nets.critic_x.zero_grad();
        nets.critic_z.zero_grad();
        Ok(terms)
    }

    /// `critic_steps` critic updates, each on a fresh data batch and a
    /// fresh prior batch.
    pub fn critic_phase(&mut self, data: &TrainingData) -> Result<CriticTerms> {
        let mut last = CriticTerms::default();
        for _ in 0..self.config.critic_steps {
            let (x, _) = self.next_batch(data);
            let z = self.sample_prior(x.rows())?;
            last = self.critic_step(&x, &z)?;
        }
        Ok(last)
    }

    /// One update of the encoder and generator (and the classifier when
    /// supervised). Labels are ignored for unsupervised models.
    pub fn mapper_phase(&mut self, x: &Tensor, labels: Option<&[usize]>) -> Result<MapperTerms> {
        let z = self.sample_prior(x.rows())?;
        let iter = self.iter;
        let cfg = &self.config;
        let labels = if cfg.supervised { labels } else { None };
        if cfg.supervised && labels.is_none() {
            return Err(Error::Config("supervised mapper step needs labels".into()));
        }
        let weights = LossWeights::Balanced {
            hats: [cfg.lambda1_hat, cfg.lambda2_hat, cfg.lambda3_hat],
        };
        let nets = &mut self.nets;
        nets.encoder.zero_grad();
        nets.generator.zero_grad();
        if let Some(c) = nets.classifier.as_mut() {
            c.zero_grad();
        }
        let terms = mapper_gradients(nets.mapper_nets(), x, &z, labels, weights, Mode::Train)
            .map_err(|e| at_iteration(e, iter))?;
        adam_step(&mut nets.encoder.params_mut(), &mut self.optim.encoder)?;
        adam_step(&mut nets.generator.params_mut(), &mut self.optim.generator)?;
        if let Some(c) = nets.classifier.as_mut() {
            adam_step(&mut c.params_mut(), &mut self.optim.classifier)?;
        }
        Ok(terms)
    }


    /// One full iteration: critic phase, then mapper phase.
    pub fn iteration(&mut self, data: &TrainingData) -> Result<LossRecord> {
        let critic = self
            .critic_phase(data)
            .map_err(|e| at_iteration(e, self.iter))?;
        let critic_max_abs = self
            .nets
            .critic_x
            .max_abs_param()
            .max(self.nets.critic_z.max_abs_param());
        let (x, y) = self.next_batch(data);
        let m = self.mapper_phase(&x, y.as_deref())?;
        let record = LossRecord {
            iteration: self.iter,
            critic_x: critic.gap_x,
            critic_z: critic.gap_z,
            adv_x: m.adv_x,
            adv_z: m.adv_z,
            cyc_forward: m.cyc_forward,
            cyc_backward: m.cyc_backward,
            cls: m.cls,
            total: m.total,
            lambda1: m.lambdas[0],
            lambda2: m.lambdas[1],
            lambda3: m.lambdas[2],
            critic_max_abs,
        };
        self.loss_log.push(record);
        self.iter += 1;
        Ok(record)
    }
}

/// Runs `config.iterations` iterations from a fresh seeded state.
pub fn train(data: &TrainingData, classes: usize, config: &TrainConfig) -> Result<TrainState> {
    train_with(data, classes, config, |_| {})
}

/// [`train`] with a callback after every iteration.
pub fn train_with(
    data: &TrainingData,
    classes: usize,
    config: &TrainConfig,
    mut on_iteration: impl FnMut(&LossRecord),
) -> Result<TrainState> {
    if config.supervised && data.labels.is_none() {
        return Err(Error::Config("supervised training needs labels".into()));
    }
    let mut state = TrainState::new(config.clone(), data.rows.cols(), classes, data.len())?;
    for _ in 0..config.iterations {
        let record = state.iteration(data)?;
        on_iteration(&record);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_sig_examples() {
        assert_eq!(format_sig(1.0, 9), "1.00000000");
        assert_eq!(format_sig(0.123456789123, 9), "0.123456789");
        assert_eq!(format_sig(-2.5e-9, 9), "-2.50000000e-9");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn batcher_covers_every_document_each_epoch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut b = Batcher::new(10);
        let mut seen: Vec<usize> = (0..5).flat_map(|_| b.next(2, &mut rng)).collect();
        seen.sort();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }
}
