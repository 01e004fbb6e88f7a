//! Trains on the synthetic corpus and reports topic recovery.
//!
//! Usage: cargo run --release -p tomcat-core --example recovery [iterations] [seed]

use tomcat_core::evaluation::{make_synthetic, pure_topic_count, topic_recovery, SyntheticSpec};
use tomcat_core::model::topic_word_distributions;
use tomcat_core::training::{train_with, TrainConfig, TrainingData};
use tomcat_core::corpus::tfidf;

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
    let m = tfidf(&synth.corpus)?;
    let data = TrainingData::new(m.rows.clone(), None)?;
    let config = TrainConfig {
        topics: 5,
        iterations,
        seed,
        ..TrainConfig::default()
    };
    let state = train_with(&data, 0, &config, |r| {
        if r.iteration % 200 == 0 {
            eprintln!(
                "{} cx={:.4} cz={:.4} cf={:.4} cb={:.4} l=({:.3},{:.3})",
                r.iteration, r.critic_x, r.critic_z, r.cyc_forward, r.cyc_backward, r.lambda1, r.lambda2
            );
        }
    })?;
    let topics = topic_word_distributions(&state.nets.generator)?;
    let rec = topic_recovery(&topics, &synth.supports);
    let pure = pure_topic_count(&topics, &synth.supports, &rec, 10)?;
    println!("score={:.4} pure={pure} matches={:?}", rec.score, rec.matches);
    Ok(())
}
