use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tomcat_core::corpus::{build_vocabulary, load_documents, Idf, RawCorpus, TokenizedDoc, Vocabulary};
use tomcat_core::evaluation::{
    accuracy, argmax_rows, build_cooc, make_synthetic, model_coherence, random_topic_coherence, SyntheticSpec,
    DEFAULT_WINDOW,
};
use tomcat_core::model::{top_word_ids, topic_word_distributions};
use tomcat_core::ndmath::Tensor;
use tomcat_core::training::{format_sig, train, write_loss_log, LossRecord, TrainConfig, TrainingData};
use tomcat_core::Error;

use crate::checkpoint::{Checkpoint, ConfigEcho};
use crate::error::{CliError, Result};

const DIGITS: usize = 9;

#[derive(Debug, Parser)]
#[command(name = "tomcat", version, about = "Cycle-consistent adversarial topic models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the vocabulary and count matrix of a corpus.
    Ingest(IngestArgs),
    /// Train a model on an ingested corpus.
    Train(Box<TrainArgs>),
    /// Print the top words of every topic.
    Topics(TopicsArgs),
    /// Print the topic distribution of every document.
    Infer(InferArgs),
    /// Report classification accuracy of a supervised model.
    Classify(ClassifyArgs),
    /// Score topics by NPMI against a reference corpus.
    EvalCoherence(EvalCoherenceArgs),
    /// Generate a corpus with known topics.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// One document per line, whitespace-tokenized.
    #[arg(long)]
    pub docs: PathBuf,
    /// One integer class id per document line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_count: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_vocab: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss log path; defaults to the checkpoint path plus `.losses.tsv`.
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub supervised: bool,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub critic_steps: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub lr_main: Option<f64>,
    #[arg(long)]
    pub beta1_main: Option<f64>,
    #[arg(long)]
    pub lr_cls: Option<f64>,
    #[arg(long)]
    pub beta1_cls: Option<f64>,
    #[arg(long)]
    pub lambda1_hat: Option<f64>,
    #[arg(long)]
    pub lambda2_hat: Option<f64>,
    #[arg(long)]
    pub lambda3_hat: Option<f64>,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            topics: self.topics.unwrap_or(d.topics),
            hidden: self.hidden.unwrap_or(d.hidden),
            alpha: self.alpha.unwrap_or(d.alpha),
            batch_size: self.batch.unwrap_or(d.batch_size),
            iterations: self.iters.unwrap_or(d.iterations),
            critic_steps: self.critic_steps.unwrap_or(d.critic_steps),
            clip: self.clip.unwrap_or(d.clip),
            lr_main: self.lr_main.unwrap_or(d.lr_main),
            beta1_main: self.beta1_main.unwrap_or(d.beta1_main),
            lr_cls: self.lr_cls.unwrap_or(d.lr_cls),
            beta1_cls: self.beta1_cls.unwrap_or(d.beta1_cls),
            lambda1_hat: self.lambda1_hat.unwrap_or(d.lambda1_hat),
            lambda2_hat: self.lambda2_hat.unwrap_or(d.lambda2_hat),
            lambda3_hat: self.lambda3_hat.unwrap_or(d.lambda3_hat),
            supervised: self.supervised,
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub docs: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub docs: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalCoherenceArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Reference documents; defaults to the corpus the model was trained on.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    /// Also report the mean NPMI of K random word lists drawn with this seed.
    #[arg(long)]
    pub baseline_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 20)]
    pub words_per_topic: usize,
    /// Defaults to `k * words_per_topic`.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub docs: usize,
    #[arg(long, default_value_t = 50)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Written by `ingest` next to the vocabulary and counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub documents: usize,
    pub vocab_size: usize,
    pub classes: usize,
    /// Documents whose TF-IDF weight vanished; they are skipped in training.
    pub dropped_rows: Vec<usize>,
}

pub const VOCAB_FILE: &str = "vocab.txt";
pub const COUNTS_FILE: &str = "counts.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const TOKENS_FILE: &str = "tokens.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a, out),
        Command::Train(a) => train_cmd(&a, out),
        Command::Topics(a) => topics(&a, out),
        Command::Infer(a) => infer(&a, out),
        Command::Classify(a) => classify(&a, out),
        Command::EvalCoherence(a) => eval_coherence(&a, out),
        Command::Synth(a) => synth(&a, out),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("writing output: {e}")))
}

fn lines<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|i| i.to_string() + "\n").collect()
}

pub fn ingest(a: &IngestArgs, out: &mut dyn Write) -> Result<()> {
    let (docs, labels) = load_documents(&a.docs, a.labels.as_deref())?;
    let vocab = build_vocabulary(&docs, a.min_count, a.max_vocab)?;
    let raw = RawCorpus::from_tokens(&docs, &vocab, labels, None)?;
    let m = Idf::fit(&raw)?.transform(&raw)?;

    create_dir(&a.out)?;
    vocab.save(a.out.join(VOCAB_FILE))?;
    let mut counts = Vec::new();
    raw.write_counts(&mut counts).expect("writing to memory");
    write_file(&a.out.join(COUNTS_FILE), counts)?;
    if let Some(l) = raw.labels() {
        write_file(&a.out.join(LABELS_FILE), lines(l))?;
    }
    write_file(&a.out.join(TOKENS_FILE), lines(docs.iter().map(|d| d.join(" "))))?;
    let manifest = Manifest {
        documents: raw.len(),
        vocab_size: vocab.len(),
        classes: raw.classes(),
        dropped_rows: m.dropped.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&a.out.join(MANIFEST_FILE), json + "\n")?;
    emit(
        out,
        &format!(
            "documents\t{}\nvocab_size\t{}\nclasses\t{}\ndropped_rows\t{}\n",
            manifest.documents,
            manifest.vocab_size,
            manifest.classes,
            manifest.dropped_rows.len()
        ),
    )
}

/// Reads an ingested directory back as a corpus.
pub fn load_ingested(dir: &Path) -> Result<(Vocabulary, RawCorpus)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?;
    let vocab = Vocabulary::load(dir.join(VOCAB_FILE))?;
    if vocab.len() != manifest.vocab_size {
        return Err(CliError::Input(format!(
            "{}: vocabulary has {} tokens, manifest says {}",
            dir.display(),
            vocab.len(),
            manifest.vocab_size
        )));
    }
    let counts = RawCorpus::read_counts(dir.join(COUNTS_FILE))?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() { Some(read_labels(&labels_path)?) } else { None };
    let classes = (manifest.classes > 0).then_some(manifest.classes);
    Ok((vocab, RawCorpus::new(counts, manifest.vocab_size, labels, classes)?))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| {
                Error::BadLabel {
                    line: i + 1,
                    value: l.to_owned(),
                }
                .into()
            })
        })
        .collect()
}

fn final_losses(record: Option<&LossRecord>) -> String {
    let mut s = String::from(LossRecord::HEADER);
    s.push('\n');
    if let Some(r) = record {
        s.push_str(&r.to_tsv());
        s.push('\n');
    }
    s
}

pub fn train_cmd(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let config = a.config();
    config.validate()?;
    let (vocab, raw) = load_ingested(&a.data)?;
    if config.supervised && raw.labels().is_none() {
        return Err(Error::Config(format!("--supervised needs {} in {}", LABELS_FILE, a.data.display())).into());
    }
    let idf = Idf::fit(&raw)?;
    let m = idf.transform(&raw)?;
    let labels = if config.supervised { m.labels_from(&raw) } else { None };
    let data = TrainingData::new(m.rows, labels)?;
    let state = train(&data, raw.classes(), &config)?;

    let echo = ConfigEcho {
        config,
        data_dir: Some(a.data.display().to_string()),
    };
    let json = serde_json::to_string(&echo).expect("config serializes");
    let ckpt = Checkpoint {
        vocab,
        nets: state.nets,
        idf,
        echo,
    };
    ckpt.save(&a.out)?;
    let log_path = a.loss_log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".losses.tsv");
        PathBuf::from(p)
    });
    let mut log = Vec::new();
    write_loss_log(&state.loss_log, &mut log).expect("writing to memory");
    write_file(&log_path, log)?;
    emit(out, &format!("config\t{json}\n{}", final_losses(state.loss_log.last())))
}

pub fn topics(a: &TopicsArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let t = topic_word_distributions(&ckpt.nets.generator)?;
    let mut s = String::new();
    for (k, row) in t.iter_rows().enumerate() {
        s.push_str(&k.to_string());
        for id in top_word_ids(row, a.top_n)? {
            s.push_str(&format!("\t{}:{}", ckpt.vocab.token(id), format_sig(row[id], DIGITS)));
        }
        s.push('\n');
    }
    emit(out, &s)
}

/// One tokenized document per input line; blank lines are kept as empty
/// documents so output rows stay aligned with input lines.
fn read_lines(path: &Path) -> Result<Vec<TokenizedDoc>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect())
}

/// Topic distributions of `docs` under the checkpoint's encoder, with
/// `true` marking documents that had no weight left and got the uniform
/// sentinel row.
pub fn infer_topics(ckpt: &Checkpoint, docs: &[TokenizedDoc]) -> Result<(Tensor, Vec<bool>)> {
    let k = ckpt.topics();
    let raw = RawCorpus::from_tokens(docs, &ckpt.vocab, None, None)?;
    let mut z = Tensor::filled(&[docs.len().max(1), k], 1.0 / k as f64);
    let mut empty = vec![true; docs.len()];
    match ckpt.idf.transform(&raw) {
        Ok(m) => {
            let enc = ckpt.nets.encoder.predict(&m.rows)?;
            for (row, &i) in m.kept.iter().enumerate() {
                z.row_mut(i).copy_from_slice(enc.row(row));
                empty[i] = false;
            }
        }
        Err(Error::AllRowsDropped) => {}
        Err(e) => return Err(e.into()),
    }
    Ok((z, empty))
}

pub fn infer(a: &InferArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let docs = read_lines(&a.docs)?;
    if docs.is_empty() {
        return Err(CliError::Input(format!("{}: no documents", a.docs.display())));
    }
    let (z, empty) = infer_topics(&ckpt, &docs)?;
    let mut s = String::new();
    for (i, flag) in empty.iter().enumerate() {
        s.push_str(&format!("{i}\t{}", if *flag { "empty" } else { "ok" }));
        for &v in z.row(i) {
            s.push('\t');
            s.push_str(&format_sig(v, DIGITS));
        }
        s.push('\n');
    }
    emit(out, &s)
}

pub fn classify(a: &ClassifyArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let Some(classifier) = ckpt.nets.classifier.as_ref() else {
        return Err(CliError::Input(format!("{}: model is not supervised", a.ckpt.display())));
    };
    let (docs, labels) = load_documents(&a.docs, Some(&a.labels))?;
    let labels = labels.expect("label path given");
    let classes = classifier.outputs();
    if let Some(&id) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::ClassOutOfRange { id, classes }.into());
    }
    let (z, _) = infer_topics(&ckpt, &docs)?;
    let predicted = argmax_rows(&classifier.predict(&z)?);
    emit(out, &format!("accuracy\t{}\n", format_sig(accuracy(&predicted, &labels), DIGITS)))
}

pub fn eval_coherence(a: &EvalCoherenceArgs, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let reference = match (&a.reference, &ckpt.echo.data_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => Path::new(dir).join(TOKENS_FILE),
        (None, None) => {
            return Err(CliError::Input(
                "no --reference given and the checkpoint records no training corpus".into(),
            ))
        }
    };
    let (docs, _) = load_documents(&reference, None)?;
    let stats = build_cooc(&docs, &ckpt.vocab, a.window)?;
    let report = model_coherence(&ckpt.nets.generator, &ckpt.vocab, &stats, a.top_n)?;
    let mut buf = Vec::new();
    report.write_tsv(&mut buf).expect("writing to memory");
    if let Some(seed) = a.baseline_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random = random_topic_coherence(&stats, ckpt.topics(), a.top_n, &mut rng)?;
        writeln!(buf, "random\t{}", format_sig(random, DIGITS)).expect("writing to memory");
    }
    out.write_all(&buf)
        .map_err(|e| CliError::Input(format!("writing output: {e}")))
}

pub fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let s = make_synthetic(&SyntheticSpec {
        topics: a.k,
        words_per_topic: a.words_per_topic,
        vocab_size: a.vocab_size.unwrap_or(a.k * a.words_per_topic),
        docs: a.docs,
        doc_length: a.doc_len,
        doc_topic_alpha: a.alpha,
        seed: a.seed,
    })?;
    create_dir(&a.out)?;
    write_file(&a.out.join("docs.txt"), lines(s.tokens.iter().map(|d| d.join(" "))))?;
    write_file(&a.out.join(LABELS_FILE), lines(s.corpus.labels().expect("synthetic labels")))?;
    let supports = s.supports.iter().enumerate().map(|(t, ids)| {
        let words: Vec<&str> = ids.iter().map(|&i| s.vocab.token(i)).collect();
        format!("{t}\t{}", words.join(" "))
    });
    write_file(&a.out.join("supports.txt"), lines(supports))?;
    emit(out, &format!("documents\t{}\nvocab_size\t{}\n", s.corpus.len(), s.vocab.len()))
}
