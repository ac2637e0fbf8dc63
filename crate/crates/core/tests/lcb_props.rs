mod common;

use std::sync::Arc;

use offline_lcb::conformal::{sample_memberships, Aggregator, BootstrapEnsemble};
use offline_lcb::env::{preprocess_context, OfflineDataset, Record};
use offline_lcb::net::{self, NetworkShape};
use offline_lcb::neural_lcb::{
    argmax_first, lcb_score, run_offline, update_lambda, DiagonalConfidence, HyperParams, PointSource,
    PolicyMixture, PolicySnapshot, Selection,
};
use offline_lcb::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conf_strategy(p: usize) -> impl Strategy<Value = DiagonalConfidence> {
    prop::collection::vec(0.01f64..10.0, p).prop_map(|d| DiagonalConfidence::from_diag(d, 0.01).unwrap())
}

fn snapshot(shape: NetworkShape, round: usize, beta: f64) -> PolicySnapshot {
    PolicySnapshot {
        weights: Arc::new(net::init_weights(shape, round as u64).unwrap()),
        confidence: Arc::new(DiagonalConfidence::new(shape.param_count(), 1.0).unwrap()),
        beta,
        round,
    }
}

/// Two-arm data where arm 1 always has the larger mean reward `x[0]`:
/// arm 0 draws `x[0] ∈ [0, 0.3]`, arm 1 draws `x[0] ∈ [0.6, 0.9]`.
fn better_arm_block(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let arm0 = vec![rng.random_range(0.0..0.3), rng.random_range(-0.3..0.3)];
    let arm1 = vec![rng.random_range(0.6..0.9), rng.random_range(-0.3..0.3)];
    vec![arm0, arm1]
}

fn better_arm_dataset(n: usize, epsilon: f64, seed: u64) -> OfflineDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|_| {
            let raw = better_arm_block(&mut rng);
            let action = if rng.random::<f64>() < epsilon { rng.random_range(0..2) } else { 1 };
            let reward = raw[action][0] + 0.1 * (rng.random::<f64>() - 0.5);
            let features = raw.iter().map(|x| preprocess_context(x).unwrap()).collect();
            Record { raw, features, action, reward, group: None, label: None }
        })
        .collect();
    OfflineDataset::new(records, 2, 2).unwrap()
}

fn small_hyper() -> HyperParams {
    HyperParams {
        width: 16,
        batch_size: 8,
        ..HyperParams::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn score_never_exceeds_point(conf in conf_strategy(6), grad in prop::collection::vec(-3.0f64..3.0, 6),
                                 point in -2.0f64..2.0, beta in 0.0f64..10.0, m in 1usize..200) {
        prop_assert!(lcb_score(point, &grad, &conf, beta, m).unwrap() <= point);
    }

    #[test]
    fn score_strictly_decreases_in_beta(conf in conf_strategy(5), grad in prop::collection::vec(0.01f64..3.0, 5),
                                        b1 in 0.0f64..5.0, gap in 0.01f64..5.0, m in 1usize..100) {
        let lo = lcb_score(0.3, &grad, &conf, b1, m).unwrap();
        let hi = lcb_score(0.3, &grad, &conf, b1 + gap, m).unwrap();
        prop_assert!(hi < lo);
    }

    #[test]
    fn argmax_is_shift_invariant(values in prop::collection::vec(-64i32..64, 2..10), c in -64i32..64) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64 / 8.0).collect();
        let shifted: Vec<f64> = v.iter().map(|x| x + c as f64 / 8.0).collect();
        prop_assert_eq!(argmax_first(&v), argmax_first(&shifted));
    }
}

#[test]
fn score_and_update_examples() {
    let conf = DiagonalConfidence::new(1, 1.0).unwrap();
    assert_eq!(lcb_score(0.7, &[2.0], &conf, 0.0, 1).unwrap(), 0.7);
    assert_eq!(lcb_score(1.0, &[2.0], &conf, 0.5, 1).unwrap(), 0.0);

    let conf = DiagonalConfidence::new(2, 0.1).unwrap();
    let next = update_lambda(&conf, &[1.0, 2.0], 4).unwrap();
    assert!((next.diag()[0] - 0.35).abs() < 1e-15 && (next.diag()[1] - 1.1).abs() < 1e-15);
    assert_eq!(update_lambda(&conf, &[0.0, 0.0], 4).unwrap(), conf);
    assert!(update_lambda(&conf, &[f64::NAN, 0.0], 4).is_err());
    let bad = DiagonalConfidence::from_diag(vec![0.0], 0.1);
    assert!(bad.is_err() || matches!(lcb_score(0.0, &[1.0], &bad.unwrap(), 1.0, 1), Err(Error::State(_))));
}

#[test]
fn confidence_diagonal_is_monotone_over_many_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut conf = DiagonalConfidence::new(20, 0.5).unwrap();
    for step in 0..10_000 {
        let grad: Vec<f64> = (0..20)
            .map(|i| if (i + step) % 7 == 0 { 0.0 } else { rng.random_range(-2.0..2.0) })
            .collect();
        let before = conf.diag().to_vec();
        conf.update(&grad, 10).unwrap();
        assert!(conf.diag().iter().zip(&before).all(|(a, b)| a >= b));
    }
    assert!(conf.diag().iter().all(|&d| d >= 0.5));
}

#[test]
fn uniform_mixture_frequencies() {
    let shape = NetworkShape::new(2, 4, 2).unwrap();
    let snaps: Vec<PolicySnapshot> = (1..=5).map(|t| snapshot(shape, t, 1.0)).collect();
    let mix: PolicyMixture = PolicyMixture::new(snaps, Selection::UniformSample, PointSource::Live).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut counts = [0usize; 5];
    let draws = 10_000;
    for _ in 0..draws {
        counts[mix.sample(&mut rng).round - 1] += 1;
    }
    for c in counts {
        assert!((c as f64 / draws as f64 - 0.2).abs() <= 0.02, "{counts:?}");
    }
    assert_eq!(mix.resolve(17).rounds(), mix.resolve(17).rounds());
    assert!(PolicyMixture::<offline_lcb::predictor::FittedModel>::new(vec![], Selection::Last, PointSource::Live).is_err());
}

#[test]
fn identical_arms_and_greedy_choice() {
    let shape = NetworkShape::new(2, 8, 4).unwrap();
    let snap = snapshot(shape, 1, 0.0);
    let u = preprocess_context(&[0.3, -0.2]).unwrap();
    let live: PointSource = PointSource::Live;
    assert_eq!(snap.act(&live, &[u.clone(), u.clone(), u.clone()]).unwrap(), 0);
    assert!(snap.act(&live, &[]).is_err());

    // Point estimates 0.2 and 0.9, keyed on the first coordinate.
    let model = |x: &[f64]| if x[0] > 0.0 { 0.9 } else { 0.2 };
    let ens = BootstrapEnsemble::from_parts(vec![model, model], sample_memberships(4, 2, 0), 4, Aggregator::Mean).unwrap();
    let source = PointSource::Ensemble(Arc::new(ens));
    let block = [preprocess_context(&[-0.4, 0.1]).unwrap(), preprocess_context(&[0.4, 0.1]).unwrap()];
    assert_eq!(snap.act(&source, &block).unwrap(), 1);
    let scores = snap.scores(&source, &block).unwrap();
    assert_eq!((scores[0].score, scores[1].score), (0.2, 0.9));
}

#[test]
fn single_round_without_training_keeps_init() {
    let data = better_arm_dataset(1, 0.1, 0);
    let hp = HyperParams { epochs: 0, ..small_hyper() };
    let run = run_offline(&data, &OfflineDataset::new(vec![], 2, 2).unwrap(), &hp, 3).unwrap();
    assert_eq!(run.mixture.len(), 1);
    let w = &run.mixture.last().weights;
    assert_eq!(w.params(), w.init_snapshot());
    assert_eq!(run.final_weights.params(), w.params());
    assert!(run.rounds[0].loss.is_nan());
}

#[test]
fn runs_are_deterministic() {
    let train = better_arm_dataset(120, 0.2, 1);
    let test = better_arm_dataset(40, 0.2, 2);
    let hp = small_hyper();
    let a = run_offline(&train, &test, &hp, 9).unwrap();
    let b = run_offline(&train, &test, &hp, 9).unwrap();
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.intervals, b.intervals);
    assert_eq!(a.final_weights.params(), b.final_weights.params());
    assert_eq!(a.final_confidence, b.final_confidence);
    let block = &test.records()[0].features;
    let (ra, rb) = (a.mixture.resolve(5), b.mixture.resolve(5));
    assert_eq!(ra.rounds(), rb.rounds());
    assert_eq!(ra.act(block).unwrap(), rb.act(block).unwrap());
    // Scoring the same context twice gives the same action.
    assert_eq!(ra.act(block).unwrap(), ra.act(block).unwrap());
}

#[test]
fn learns_the_uniformly_better_arm() {
    let train = better_arm_dataset(2_000, 0.1, 10);
    let hp = HyperParams {
        selection: Selection::Last,
        snapshot_stride: 100,
        ..HyperParams::default()
    };
    let run = run_offline(&train, &OfflineDataset::new(vec![], 2, 2).unwrap(), &hp, 0).unwrap();
    let policy = run.mixture.resolve(0);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let hits = (0..1_000)
        .filter(|_| {
            let block: Vec<Vec<f64>> = better_arm_block(&mut rng).iter().map(|x| preprocess_context(x).unwrap()).collect();
            policy.act(&block).unwrap() == 1
        })
        .count();
    assert!(hits >= 950, "{hits}");
}
