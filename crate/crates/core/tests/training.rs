mod common;

use common::bits;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tomcat_core::corpus::tfidf;
use tomcat_core::evaluation::{make_synthetic, SyntheticSpec};
use tomcat_core::model::generate;
use tomcat_core::ndmath::{Mode, Tensor};
use tomcat_core::training::{
    adv_loss_x, adv_loss_z, balance, cycle_losses, mapper_gradients, train, wasserstein_gap, weighted_total,
    LossWeights, Networks, TrainConfig, TrainState, TrainingData,
};
use tomcat_core::Error;

fn data() -> TrainingData {
    let synth = make_synthetic(&SyntheticSpec {
        topics: 3,
        words_per_topic: 5,
        vocab_size: 18,
        docs: 200,
        doc_length: 30,
        doc_topic_alpha: 0.1,
        seed: 1,
    })
    .unwrap();
    let m = tfidf(&synth.corpus).unwrap();
    TrainingData::new(m.rows.clone(), m.labels_from(&synth.corpus)).unwrap()
}

fn config(iterations: usize, supervised: bool) -> TrainConfig {
    TrainConfig {
        topics: 3,
        hidden: 8,
        batch_size: 16,
        iterations,
        supervised,
        seed: 42,
        ..TrainConfig::default()
    }
}

fn state(supervised: bool) -> TrainState {
    TrainState::new(config(0, supervised), 18, 3, 200).unwrap()
}

fn all_bits(nets: &Networks) -> Vec<Vec<u64>> {
    nets.iter().map(bits).collect()
}

#[test]
fn critic_phase_clips_and_leaves_mappers_untouched() {
    let d = data();
    let mut s = state(true);
    let before = (bits(&s.nets.encoder), bits(&s.nets.generator), bits(s.nets.classifier.as_ref().unwrap()));
    for _ in 0..3 {
        s.critic_phase(&d).unwrap();
        assert!(s.nets.critic_x.max_abs_param() <= 0.01);
        assert!(s.nets.critic_z.max_abs_param() <= 0.01);
    }
    let after = (bits(&s.nets.encoder), bits(&s.nets.generator), bits(s.nets.classifier.as_ref().unwrap()));
    assert_eq!(before, after);
}

#[test]
fn critic_loss_falls_against_frozen_mappers() {
    let d = data();
    let mut s = state(false);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = d.rows.select_rows(&(0..64).collect::<Vec<_>>());
    let z = s.prior.sample(64, &mut rng).unwrap();
    let critic_loss = |s: &mut TrainState| {
        let x_fake = generate(&mut s.nets.generator.clone(), &z, Mode::BatchStats).unwrap();
        let z_fake = s.nets.encoder.clone().forward(&x, Mode::BatchStats).unwrap().output().clone();
        -(adv_loss_x(&mut s.nets.critic_x, &x, &x_fake, Mode::BatchStats).unwrap()
            + adv_loss_z(&mut s.nets.critic_z, &z, &z_fake, Mode::BatchStats).unwrap())
    };
    // the untrained critic is not yet inside the clipping box; start from the first clipped one
    s.critic_phase(&d).unwrap();
    let initial = critic_loss(&mut s);
    for _ in 0..100 {
        s.critic_phase(&d).unwrap();
    }
    let last = critic_loss(&mut s);
    println!("critic loss {initial} -> {last}");
    assert!(last < initial, "{initial} -> {last}");
}

#[test]
fn mapper_phase_leaves_critics_untouched() {
    let d = data();
    let mut s = state(true);
    s.critic_phase(&d).unwrap();
    let before = (bits(&s.nets.critic_x), bits(&s.nets.critic_z));
    let x = d.rows.select_rows(&(0..16).collect::<Vec<_>>());
    let y: Vec<usize> = d.labels.as_ref().unwrap()[..16].to_vec();
    s.mapper_phase(&x, Some(&y)).unwrap();
    assert_eq!(before, (bits(&s.nets.critic_x), bits(&s.nets.critic_z)));
}

#[test]
fn unsupervised_mapper_phase_ignores_labels() {
    let d = data();
    let x = d.rows.select_rows(&(10..26).collect::<Vec<_>>());
    let y = d.labels.as_ref().unwrap()[10..26].to_vec();
    let mut with = state(false);
    let mut without = with.clone();
    let a = with.mapper_phase(&x, Some(&y)).unwrap();
    let b = without.mapper_phase(&x, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cls, 0.0);
    assert_eq!(all_bits(&with.nets), all_bits(&without.nets));
}

#[test]
fn supervised_mapper_phase_needs_labels() {
    let d = data();
    let x = d.rows.select_rows(&(0..16).collect::<Vec<_>>());
    assert!(matches!(state(true).mapper_phase(&x, None), Err(Error::Config(_))));
    let unlabeled = TrainingData::new(d.rows.clone(), None).unwrap();
    assert!(matches!(train(&unlabeled, 3, &config(1, true)), Err(Error::Config(_))));
}

#[test]
fn constant_critics_without_cycle_weight_give_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut nets = Networks::init(6, 3, 4, 0, &mut rng);
    for critic in [&mut nets.critic_x, &mut nets.critic_z] {
        critic.output.weight = critic.output.weight.map(|_| 0.0);
        critic.output.bias = critic.output.bias.map(|_| 0.0);
    }
    let x = common::simplex_rows(&mut rng, 5, 6);
    let z = common::simplex_rows(&mut rng, 5, 3);
    let terms = mapper_gradients(
        nets.mapper_nets(),
        &x,
        &z,
        None,
        LossWeights::Balanced { hats: [0.0, 0.0, 1.0] },
        Mode::Train,
    )
    .unwrap();
    assert_eq!((terms.adv_x, terms.adv_z), (0.0, 0.0));
    assert_eq!(terms.lambdas, [0.0; 3]);
    for net in [&mut nets.encoder, &mut nets.generator] {
        for p in net.params_mut() {
            assert!(p.grad().unwrap().iter().all(|&g| g == 0.0));
        }
    }
}

#[test]
fn seeded_training_is_deterministic() {
    let d = data();
    let a = train(&d, 3, &config(15, true)).unwrap();
    let b = train(&d, 3, &config(15, true)).unwrap();
    assert_eq!(all_bits(&a.nets), all_bits(&b.nets));
    assert_eq!(a.loss_log, b.loss_log);
    let other = train(&d, 3, &TrainConfig { seed: 43, ..config(15, true) }).unwrap();
    assert_ne!(all_bits(&a.nets), all_bits(&other.nets));
}

#[test]
fn zero_iterations_return_the_initialization() {
    let d = data();
    let trained = train(&d, 3, &config(0, false)).unwrap();
    assert_eq!(all_bits(&trained.nets), all_bits(&state(false).nets));
    assert!(trained.loss_log.is_empty());
}

#[test]
fn log_records_clipping_and_consistent_totals() {
    let d = data();
    for supervised in [false, true] {
        let s = train(&d, 3, &config(40, supervised)).unwrap();
        assert_eq!(s.loss_log.len(), 40);
        for r in &s.loss_log {
            assert!(r.critic_max_abs <= 0.01);
            let total = weighted_total(
                r.adv_x,
                r.adv_z,
                [r.cyc_forward, r.cyc_backward],
                r.cls,
                [r.lambda1, r.lambda2, r.lambda3],
            );
            assert!((total - r.total).abs() <= 1e-9, "{total} vs {}", r.total);
            assert!(r.lambda1 > 0.0 && r.lambda2 > 0.0);
            assert_eq!(r.lambda3 > 0.0, supervised);
        }
    }
}

#[test]
fn non_finite_input_aborts_with_the_term() {
    let mut d = data();
    d.rows.row_mut(0).fill(f64::NAN);
    let all: Vec<usize> = (0..200).collect();
    let x = d.rows.select_rows(&all);
    let d = TrainingData { rows: x, labels: None };
    match train(&d, 0, &config(3, false)) {
        Err(Error::NonFiniteLoss { iteration: 0, .. }) | Err(Error::NonFiniteGradient) => {}
        other => panic!("expected a numerical abort, got {other:?}"),
    }
}

#[test]
fn adversarial_loss_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut nets = Networks::init(6, 3, 4, 0, &mut rng);
    let x = common::simplex_rows(&mut rng, 5, 6);
    let fake = common::simplex_rows(&mut rng, 5, 6);
    assert_eq!(adv_loss_x(&mut nets.critic_x, &x, &x, Mode::BatchStats).unwrap(), 0.0);

    nets.critic_x.output.weight = nets.critic_x.output.weight.map(|_| 0.0);
    nets.critic_x.output.bias = nets.critic_x.output.bias.map(|_| 0.7);
    assert_eq!(adv_loss_x(&mut nets.critic_x, &x, &fake, Mode::BatchStats).unwrap(), 0.0);

    let z = common::simplex_rows(&mut rng, 5, 3);
    assert_eq!(adv_loss_z(&mut nets.critic_z, &z, &z, Mode::BatchStats).unwrap(), 0.0);

    let fake_scores = common::uniform(&mut rng, 5, 1, -1.0, 1.0);
    let real_scores = fake_scores.map(|s| s + 0.375);
    assert!((wasserstein_gap(&real_scores, &fake_scores).unwrap() - 0.375).abs() < 1e-15);
}

proptest! {
    #[test]
    fn cycle_losses_are_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nets = Networks::init(7, 3, 5, 0, &mut rng);
        common::perturb(&mut nets.encoder, &mut rng);
        common::perturb(&mut nets.generator, &mut rng);
        let x = common::simplex_rows(&mut rng, 4, 7);
        let z = common::simplex_rows(&mut rng, 4, 3);
        let (f, b) = cycle_losses(&mut nets.generator, &mut nets.encoder, &x, &z, Mode::BatchStats).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&f));
        prop_assert!((0.0..=2.0 + 1e-12).contains(&b));
    }

    #[test]
    fn balancing_cancels_a_rescaled_auxiliary_loss(
        adv in 1e-6f64..1e3,
        hat in 0.01f64..5.0,
        c in 1e-3f64..1e3,
        grad in proptest::collection::vec(-10.0f64..10.0, 1..20),
    ) {
        let g = Tensor::new(vec![grad.len()], grad).unwrap();
        prop_assume!(g.l2_norm() > 1e-9);
        let scaled = g.map(|v| c * v);
        let lambda = balance(adv, g.l2_norm(), hat);
        let lambda_c = balance(adv, scaled.l2_norm(), hat);
        for (a, b) in g.data().iter().zip(scaled.data()) {
            let (lhs, rhs) = (lambda_c * b, lambda * a);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0), "{} vs {}", lhs, rhs);
        }
    }
}
