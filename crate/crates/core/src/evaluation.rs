//! NPMI topic coherence over sliding-window co-occurrence counts,
//! classification accuracy, and the synthetic-corpus recovery oracle.

use std::collections::HashMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{RawCorpus, TokenizedDoc, Vocabulary, WordCounts};
use crate::error::{Error, Result};
use crate::model::{top_word_ids, topic_word_distributions, DirichletPrior, Network};
use crate::ndmath::Tensor;
use crate::training::format_sig;

pub const NPMI_EPS: f64 = 1e-12;
pub const DEFAULT_WINDOW: usize = 10;

// ── Co-occurrence statistics ─────────────────────────────────────────

/// Boolean document counts over sliding-window virtual documents.
#[derive(Clone, Debug, PartialEq)]
pub struct CoocStats {
    pub window_size: usize,
    pub virtual_doc_count: u64,
    word_doc_counts: Vec<u64>,
    pair_doc_counts: HashMap<(u32, u32), u64>,
}

fn pair_key(a: usize, b: usize) -> (u32, u32) {
    if a < b {
        (a as u32, b as u32)
    } else {
        (b as u32, a as u32)
    }
}

impl CoocStats {
    pub fn vocab_size(&self) -> usize {
        self.word_doc_counts.len()
    }

    pub fn word_count(&self, w: usize) -> u64 {
        self.word_doc_counts[w]
    }

    pub fn pair_count(&self, a: usize, b: usize) -> u64 {
        self.pair_doc_counts.get(&pair_key(a, b)).copied().unwrap_or(0)
    }
}

/// Slides a window of `window_size` tokens (stride 1) over each reference
/// document; every window position is one virtual document. Documents no
/// longer than the window form a single virtual document. Tokens outside
/// the vocabulary occupy window slots but are not counted.
pub fn build_cooc(reference: &[TokenizedDoc], vocab: &Vocabulary, window_size: usize) -> Result<CoocStats> {
    if window_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "window size must be >= 2, got {window_size}"
        )));
    }
    let mut stats = CoocStats {
        window_size,
        virtual_doc_count: 0,
        word_doc_counts: vec![0; vocab.len()],
        pair_doc_counts: HashMap::new(),
    };
    let mut distinct = Vec::with_capacity(window_size);
    for doc in reference {
        if doc.is_empty() {
            continue;
        }
        let ids: Vec<Option<usize>> = doc.iter().map(|t| vocab.id(t)).collect();
        let width = window_size.min(ids.len());
        for win in ids.windows(width) {
            stats.virtual_doc_count += 1;
            distinct.clear();
            distinct.extend(win.iter().flatten().copied());
            distinct.sort_unstable();
            distinct.dedup();
            for (i, &a) in distinct.iter().enumerate() {
                stats.word_doc_counts[a] += 1;
                for &b in &distinct[i + 1..] {
                    *stats.pair_doc_counts.entry(pair_key(a, b)).or_default() += 1;
                }
            }
        }
    }
    if stats.virtual_doc_count == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(stats)
}

/// Normalized PMI of two distinct words; -1 when either never occurs.
pub fn npmi_pair(stats: &CoocStats, wi: usize, wj: usize) -> Result<f64> {
    if wi == wj {
        return Err(Error::IdenticalWords(wi));
    }
    for w in [wi, wj] {
        if w >= stats.vocab_size() {
            return Err(Error::WordOutOfRange {
                id: w,
                size: stats.vocab_size(),
            });
        }
    }
    let n = stats.virtual_doc_count as f64;
    let (ci, cj) = (stats.word_count(wi), stats.word_count(wj));
    if ci == 0 || cj == 0 {
        return Ok(-1.0);
    }
    let pij = stats.pair_count(wi, wj) as f64 / n + NPMI_EPS;
    let (pi, pj) = (ci as f64 / n, cj as f64 / n);
    Ok((pij / (pi * pj)).ln() / -pij.ln())
}

/// Mean NPMI over all unordered pairs of the given words.
pub fn topic_npmi(stats: &CoocStats, words: &[usize]) -> Result<f64> {
    if words.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "topic coherence needs at least 2 words, got {}",
            words.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in words.iter().enumerate() {
        for &b in &words[i + 1..] {
            sum += npmi_pair(stats, a, b)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

// ── Coherence reports ────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct TopicReport {
    pub topic_id: usize,
    pub word_distribution: Vec<f64>,
    pub top_words: Vec<String>,
    pub npmi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub topics: Vec<TopicReport>,
    pub mean: f64,
}

impl CoherenceReport {
    /// `topic_id \t npmi \t words`, then a `mean \t npmi` line.
    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for t in &self.topics {
            writeln!(out, "{}\t{}\t{}", t.topic_id, format_sig(t.npmi, 9), t.top_words.join(" "))?;
        }
        writeln!(out, "mean\t{}", format_sig(self.mean, 9))
    }
}

/// Scores each row of a `K x V` topic-word matrix by the NPMI of its
/// top-`n` words.
pub fn coherence_of_topics(
    topics: &Tensor,
    vocab: &Vocabulary,
    stats: &CoocStats,
    n: usize,
) -> Result<CoherenceReport> {
    if topics.cols() != vocab.len() || stats.vocab_size() != vocab.len() {
        return Err(Error::ShapeMismatch {
            op: "coherence",
            left: topics.shape().to_vec(),
            right: vec![vocab.len(), stats.vocab_size()],
        });
    }
    let mut reports = Vec::with_capacity(topics.rows());
    for (k, row) in topics.iter_rows().enumerate() {
        let ids = top_word_ids(row, n)?;
        reports.push(TopicReport {
            topic_id: k,
            word_distribution: row.to_vec(),
            top_words: ids.iter().map(|&i| vocab.token(i).to_owned()).collect(),
            npmi: topic_npmi(stats, &ids)?,
        });
    }
    let mean = reports.iter().map(|r| r.npmi).sum::<f64>() / reports.len() as f64;
    Ok(CoherenceReport {
        topics: reports,
        mean,
    })
}

/// Per-topic and mean NPMI of the generator's topics.
pub fn model_coherence(
    generator: &Network,
    vocab: &Vocabulary,
    stats: &CoocStats,
    n: usize,
) -> Result<CoherenceReport> {
    coherence_of_topics(&topic_word_distributions(generator)?, vocab, stats, n)
}

/// Mean NPMI of `topics` lists of `n` distinct uniformly drawn words.
pub fn random_topic_coherence<R: Rng + ?Sized>(
    stats: &CoocStats,
    topics: usize,
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    let v = stats.vocab_size();
    if n < 2 || n > v || topics == 0 {
        return Err(Error::InvalidArgument(format!(
            "random topics need 2 <= n <= {v} and topics >= 1"
        )));
    }
    let mut sum = 0.0;
    for _ in 0..topics {
        let ids = sample(rng, v, n).into_vec();
        sum += topic_npmi(stats, &ids)?;
    }
    Ok(sum / topics as f64)
}

// ── Classification ───────────────────────────────────────────────────

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    t.iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Fraction of rows whose predicted class (argmax of `C(E(x))` in eval
/// mode) equals the label.
pub fn classify_accuracy(encoder: &Network, classifier: &Network, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.rows() {
        return Err(Error::LabelMismatch {
            docs: x.rows(),
            labels: labels.len(),
        });
    }
    let probs = classifier.predict(&encoder.predict(x)?)?;
    Ok(accuracy(&argmax_rows(&probs), labels))
}

pub fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

// ── Synthetic corpora ────────────────────────────────────────────────

/// LDA-style generator with disjoint topic supports.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub topics: usize,
    pub words_per_topic: usize,
    /// Total vocabulary; words past `topics * words_per_topic` never occur.
    pub vocab_size: usize,
    pub docs: usize,
    pub doc_length: usize,
    pub doc_topic_alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    /// Token sequences in generation order.
    pub tokens: Vec<TokenizedDoc>,
    /// Counts, with label = dominant topic of each document.
    pub corpus: RawCorpus,
    /// Word ids of each true topic.
    pub supports: Vec<Vec<usize>>,
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    let SyntheticSpec {
        topics,
        words_per_topic,
        vocab_size,
        docs,
        doc_length,
        doc_topic_alpha,
        seed,
    } = *spec;
    if topics == 0 || words_per_topic == 0 || docs == 0 || doc_length == 0 {
        return Err(Error::InvalidArgument("synthetic spec sizes must be >= 1".into()));
    }
    if topics * words_per_topic > vocab_size {
        return Err(Error::InvalidArgument(format!(
            "{topics} topics x {words_per_topic} words exceed vocabulary of {vocab_size}"
        )));
    }
    let width = (vocab_size - 1).to_string().len();
    let vocab = Vocabulary::new((0..vocab_size).map(|i| format!("w{i:0width$}")).collect())?;
    let supports: Vec<Vec<usize>> = (0..topics)
        .map(|t| (t * words_per_topic..(t + 1) * words_per_topic).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = DirichletPrior::new(topics, doc_topic_alpha)?;
    let mut tokens = Vec::with_capacity(docs);
    let mut counts = Vec::with_capacity(docs);
    let mut labels = Vec::with_capacity(docs);
    for _ in 0..docs {
        let theta = prior.sample(1, &mut rng)?.into_data();
        labels.push(argmax_rows(&Tensor::matrix(1, topics, theta.clone())?)[0]);
        let mut doc = Vec::with_capacity(doc_length);
        let mut c = WordCounts::new();
        for _ in 0..doc_length {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut topic = topics - 1;
            for (t, &p) in theta.iter().enumerate() {
                acc += p;
                if u < acc {
                    topic = t;
                    break;
                }
            }
            let w = supports[topic][rng.random_range(0..words_per_topic)];
            *c.entry(w).or_default() += 1;
            doc.push(vocab.token(w).to_owned());
        }
        tokens.push(doc);
        counts.push(c);
    }
    let corpus = RawCorpus::new(counts, vocab_size, Some(labels), Some(topics))?;
    Ok(SyntheticCorpus {
        vocab,
        tokens,
        corpus,
        supports,
    })
}

/// Outcome of matching learned topics to true supports.
#[derive(Clone, Debug, PartialEq)]
pub struct Recovery {
    /// Mean over true topics of the mass their matched learned topic puts
    /// on the support (0 for unmatched true topics).
    pub score: f64,
    /// `(true topic, learned topic, mass)` in matching order.
    pub matches: Vec<(usize, usize, f64)>,
}

/// Greedy one-to-one matching: repeatedly pair the unmatched learned
/// topic and true support with the largest mass-on-support.
pub fn topic_recovery(learned: &Tensor, supports: &[Vec<usize>]) -> Recovery {
    let mut candidates = Vec::with_capacity(learned.rows() * supports.len());
    for (k, row) in learned.iter_rows().enumerate() {
        for (t, s) in supports.iter().enumerate() {
            let mass: f64 = s.iter().map(|&w| row[w]).sum();
            candidates.push((t, k, mass));
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_true = vec![false; supports.len()];
    let mut used_learned = vec![false; learned.rows()];
    let mut matches = Vec::new();
    for (t, k, mass) in candidates {
        if used_true[t] || used_learned[k] {
            continue;
        }
        used_true[t] = true;
        used_learned[k] = true;
        matches.push((t, k, mass));
    }
    let score = matches.iter().map(|m| m.2).sum::<f64>() / supports.len().max(1) as f64;
    Recovery { score, matches }
}

pub fn topic_recovery_score(learned: &Tensor, supports: &[Vec<usize>]) -> f64 {
    topic_recovery(learned, supports).score
}

/// Number of matched learned topics whose top-`n` words all lie inside the
/// matched support.
pub fn pure_topic_count(learned: &Tensor, supports: &[Vec<usize>], recovery: &Recovery, n: usize) -> Result<usize> {
    let mut count = 0;
    for &(t, k, _) in &recovery.matches {
        let top = top_word_ids(learned.row(k), n)?;
        if top.iter().all(|w| supports[t].contains(w)) {
            count += 1;
        }
    }
    Ok(count)
}
