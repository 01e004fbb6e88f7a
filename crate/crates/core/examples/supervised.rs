//! Supervised versus unsupervised training on an 80/20 split of the
//! synthetic corpus.
//!
//! Usage: cargo run --release -p tomcat-core --example supervised [iterations] [seed]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomcat_core::corpus::Idf;
use tomcat_core::evaluation::{classify_accuracy, make_synthetic, topic_recovery_score, SyntheticSpec};
use tomcat_core::model::topic_word_distributions;
use tomcat_core::training::{train, TrainConfig, TrainingData};

fn main() -> tomcat_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let synth = make_synthetic(&SyntheticSpec {
        topics: 5,
        words_per_topic: 20,
        vocab_size: 100,
        docs: 2000,
        doc_length: 50,
        doc_topic_alpha: 0.05,
        seed: 13,
    })?;
    let mut idx: Vec<usize> = (0..synth.corpus.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, test_idx) = idx.split_at(idx.len() * 4 / 5);
    let train_raw = synth.corpus.subset(train_idx);
    let test_raw = synth.corpus.subset(test_idx);
    let idf = Idf::fit(&train_raw)?;
    let tr = idf.transform(&train_raw)?;
    let te = idf.transform(&test_raw)?;
    let data = TrainingData::new(tr.rows.clone(), tr.labels_from(&train_raw))?;
    for supervised in [false, true] {
        let config = TrainConfig {
            topics: 5,
            iterations,
            seed,
            supervised,
            ..TrainConfig::default()
        };
        let state = train(&data, 5, &config)?;
        let score = topic_recovery_score(&topic_word_distributions(&state.nets.generator)?, &synth.supports);
        let acc = match &state.nets.classifier {
            Some(c) => classify_accuracy(&state.nets.encoder, c, &te.rows, &te.labels_from(&test_raw).unwrap())?,
            None => f64::NAN,
        };
        println!("supervised={supervised} score={score:.4} acc={acc:.4}");
    }
    Ok(())
}
