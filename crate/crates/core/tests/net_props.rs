mod common;

use offline_lcb::net::{self, NetworkShape, NetworkWeights, TrainBatch};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape_strategy(max_width: usize) -> impl Strategy<Value = NetworkShape> {
    (2usize..=4, 1usize..=max_width / 2, 1usize..=4)
        .prop_map(|(l, hm, hd)| NetworkShape::new(l, 2 * hm, 2 * hd).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn init_output_vanishes_on_duplicated_inputs(shape in shape_strategy(16), seed in any::<u64>(), x in 0u64..1000) {
        let w = net::init_weights(shape, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(x);
        let u = common::duplicated_input(&mut rng, shape.input_dim / 2);
        prop_assert!(w.forward(&u).unwrap().abs() <= 1e-6);
    }

    #[test]
    fn forward_matches_reference(shape in shape_strategy(12), seed in any::<u64>(), x in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(x);
        let params: Vec<f64> = (0..shape.param_count()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let w = NetworkWeights::from_flat(shape, params.clone()).unwrap();
        let u: Vec<f64> = (0..shape.input_dim).map(|_| rand::Rng::random_range(&mut rng, -0.4..0.4)).collect();
        let a = w.forward(&u).unwrap();
        let b = common::forward(shape, &params, &u);
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        let _ = seed;
    }

    #[test]
    fn gradient_matches_finite_differences(shape in shape_strategy(8), x in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(x);
        let params: Vec<f64> = (0..shape.param_count()).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let w = NetworkWeights::from_flat(shape, params.clone()).unwrap();
        let u: Vec<f64> = (0..shape.input_dim).map(|_| rand::Rng::random_range(&mut rng, -0.5..0.5)).collect();
        let g = w.gradient(&u).unwrap();
        let fd = common::fd_gradient(shape, &params, &u, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            prop_assert!((a - b).abs() <= 1e-4 * a.abs().max(b.abs()).max(1e-2), "{a} vs {b}");
        }
    }

    #[test]
    fn parameter_count_formula(shape in shape_strategy(20)) {
        let (m, d, l) = (shape.width, shape.input_dim, shape.depth);
        let w = net::init_weights(shape, 0).unwrap();
        let u = vec![0.1; d];
        prop_assert_eq!(w.gradient(&u).unwrap().len(), m * d + m + m * m * (l - 2));
        prop_assert_eq!(w.params().len(), shape.param_count());
    }

    #[test]
    fn last_layer_scaling_scales_hidden_gradient(shape in shape_strategy(8), seed in any::<u64>(), c in 0.1f64..5.0) {
        let w = net::init_weights(shape, seed).unwrap();
        let mut scaled = w.params().to_vec();
        let last = shape.layer_offset(shape.depth - 1);
        scaled[last..].iter_mut().for_each(|v| *v *= c);
        let ws = NetworkWeights::from_flat(shape, scaled).unwrap();
        let u: Vec<f64> = (0..shape.input_dim).map(|j| 0.3 / (j + 1) as f64).collect();
        let (g, gs) = (w.gradient(&u).unwrap(), ws.gradient(&u).unwrap());
        for i in 0..last {
            prop_assert!((gs[i] - c * g[i]).abs() <= 1e-12 * g[i].abs().max(1.0));
        }
    }
}

#[test]
fn proximal_term_anchors_weights() {
    let shape = NetworkShape::new(2, 8, 4).unwrap();
    let w0 = net::init_weights(shape, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut batch = TrainBatch::default();
    for _ in 0..16 {
        let u = common::duplicated_input(&mut rng, 2);
        batch.targets.push(u[0] * 2.0 + 0.3);
        batch.inputs.push(u);
    }
    let mut distances = Vec::new();
    for reg in [0.01, 0.1, 1.0, 10.0] {
        let mut w = w0.clone();
        for _ in 0..50 {
            w = net::sgd_epoch(&w, &batch, 1e-3, reg).unwrap();
        }
        distances.push(w.distance_from_init());
    }
    assert!(distances.windows(2).all(|p| p[1] <= p[0]), "{distances:?}");
    assert!(distances[0] > 0.0);
}

#[test]
fn init_snapshot_survives_training() {
    let shape = NetworkShape::new(3, 4, 2).unwrap();
    let w0 = net::init_weights(shape, 1).unwrap();
    let batch = TrainBatch::new(vec![vec![0.3, 0.3]], vec![0.9]).unwrap();
    let w1 = net::sgd_epoch(&w0, &batch, 1e-2, 0.1).unwrap();
    assert_ne!(w1.params(), w0.params());
    assert_eq!(w1.init_snapshot(), w0.params());
}

#[test]
fn batch_rejects_inputs_outside_unit_ball() {
    assert!(TrainBatch::new(vec![vec![1.0, 1.0]], vec![0.0]).is_err());
}
