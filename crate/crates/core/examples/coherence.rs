//! Trains on the prepared 20 Newsgroups subset and compares NPMI against
//! the random-word and untrained baselines.
//!
//! Usage: cargo run --release -p tomcat-core --example coherence [iterations] [seed]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomcat_core::corpus::{build_vocabulary, load_documents, tfidf, RawCorpus};
use tomcat_core::evaluation::{build_cooc, model_coherence, random_topic_coherence, DEFAULT_WINDOW};
use tomcat_core::model::{top_words, topic_word_distributions};
use tomcat_core::training::{train_with, TrainConfig, TrainState, TrainingData};

fn main() -> tomcat_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/20ng");
    let (docs, _) = load_documents(format!("{root}/docs.txt"), None)?;
    let vocab = build_vocabulary(&docs, 1, 2000)?;
    let raw = RawCorpus::from_tokens(&docs, &vocab, None, None)?;
    let m = tfidf(&raw)?;
    let data = TrainingData::new(m.rows.clone(), None)?;
    let stats = build_cooc(&docs, &vocab, DEFAULT_WINDOW)?;
    let config = TrainConfig {
        topics: 20,
        iterations,
        seed,
        ..TrainConfig::default()
    };
    let untrained = TrainState::new(config.clone(), vocab.len(), 0, data.len())?;
    let base = model_coherence(&untrained.nets.generator, &vocab, &stats, 10)?.mean;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = random_topic_coherence(&stats, 20, 10, &mut rng)?;
    let state = train_with(&data, 0, &config, |r| {
        if r.iteration % 500 == 0 {
            eprintln!(
                "{} cx={:.4} cz={:.4} cf={:.4} cb={:.4} l=({:.3},{:.3})",
                r.iteration, r.critic_x, r.critic_z, r.cyc_forward, r.cyc_backward, r.lambda1, r.lambda2
            );
        }
    })?;
    let report = model_coherence(&state.nets.generator, &vocab, &stats, 10)?;
    let topics = topic_word_distributions(&state.nets.generator)?;
    for k in 0..5 {
        println!("{}", top_words(topics.row(k), &vocab, 10)?.join(" "));
    }
    println!("trained={:.4} random={random:.4} untrained={base:.4}", report.mean);
    Ok(())
}
