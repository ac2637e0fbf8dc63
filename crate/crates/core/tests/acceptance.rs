//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use offline_lcb::conformal::{ensemble_cp, fit_bootstrap, optimize_beta, Aggregator, ConformalConfig, ResidualSet};
use offline_lcb::env::{generate_offline, read_csv, write_csv, CsvSchema, EnvConfig, Environment, Family};
use offline_lcb::eval::{run_experiment, Algorithm, ExperimentConfig, RegretRow};
use offline_lcb::lin_lcb::{lin_lcb_score, HybridConfig, LinLcbPolicy, LinearModel};
use offline_lcb::net::{self, NetworkShape, NetworkWeights};
use offline_lcb::neural_lcb::{lcb_score, DiagonalConfidence};
use offline_lcb::predictor::{MeanTrainer, RegressionData, RidgeTrainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Outcome of one criterion: pass flag and a one-line measurement summary.
type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn init_zero() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for i in 0..1_000u64 {
        let depth = r.random_range(2..=4);
        let width = 2 * r.random_range(1..=50);
        let half = r.random_range(1..=8);
        let shape = NetworkShape::new(depth, width, 2 * half).unwrap();
        let w = net::init_weights(shape, i).unwrap();
        let u = common::duplicated_input(&mut r, half);
        worst = worst.max(w.forward(&u).unwrap().abs());
    }
    (worst <= 1e-6, format!("max |f(W0; u)| = {worst:.3e} (tol 1e-6)"))
}

fn gradient_check() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 100 {
        let depth = r.random_range(2..=4);
        let width = 2 * r.random_range(1..=10);
        let input_dim = 2 * r.random_range(1..=5);
        let shape = NetworkShape::new(depth, width, input_dim).unwrap();
        if shape.param_count() > 500 {
            continue;
        }
        pairs += 1;
        let scale = Normal::new(0.0, (4.0 / width as f64).sqrt()).unwrap();
        let params: Vec<f64> = (0..shape.param_count()).map(|_| scale.sample(&mut r)).collect();
        let w = NetworkWeights::from_flat(shape, params.clone()).unwrap();
        let u: Vec<f64> = {
            let x: Vec<f64> = (0..input_dim).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            x.into_iter().map(|v| v / n).collect()
        };
        let g = w.gradient(&u).unwrap();
        let fd = common::fd_gradient(shape, &params, &u, 1e-6);
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(diff / norm(&g).max(norm(&fd)).max(1e-12));
    }
    (worst <= 1e-4, format!("max ‖g − g_fd‖/‖g‖ over 100 pairs = {worst:.3e} (tol 1e-4)"))
}

fn conformal_coverage() -> Outcome {
    let alphas = [0.05, 0.1, 0.25];
    let cfg = ConformalConfig { alphas: alphas.to_vec(), ..Default::default() };
    let mut coverage = [0.0; 3];
    let mut nested = true;
    for seed in 0..20u64 {
        let train = common::linear_regression(500, 4, 0.1, 1_000 + 2 * seed);
        let test = common::linear_regression(500, 4, 0.1, 1_001 + 2 * seed);
        let run = ensemble_cp(&train, &test, &RidgeTrainer::default(), 10, Aggregator::Mean, &cfg, seed).unwrap();
        let mut width = [0.0; 3];
        for rec in &run.intervals {
            let k = alphas.iter().position(|a| *a == rec.alpha).unwrap();
            coverage[k] += rec.covered as f64 / (500.0 * 20.0);
            width[k] += rec.width / 500.0;
        }
        nested &= width[0] >= width[2];
    }
    let ok = alphas.iter().zip(&coverage).all(|(a, c)| *c >= 1.0 - a - 0.05) && nested;
    (
        ok,
        format!(
            "coverage {:.4}/{:.4}/{:.4} at α=0.05/0.1/0.25 (need ≥ 0.90/0.85/0.70); width(0.05) ≥ width(0.25) every seed: {nested}",
            coverage[0], coverage[1], coverage[2]
        ),
    )
}

fn beta_brute_force() -> Outcome {
    let mut r = rng(4);
    let mut mismatches = 0;
    for _ in 0..1_000 {
        let n = r.random_range(10..=500);
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let alpha = r.random_range(0.01..0.6);
        let step = alpha / [1.0, 2.0, 5.0, 10.0, 20.0, 100.0][r.random_range(0..6)];
        let set = ResidualSet::from_values(values.iter().copied(), n);
        if optimize_beta(&set, alpha, step).unwrap() != common::brute_force_beta(&values, alpha, step).0 {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches in 1000 residual sets"))
}

fn linlcb_exactness() -> Outcome {
    let mut r = rng(5);
    let (mut residual, mut lin_gap, mut ens_gap, mut oracle_gap): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..200u64 {
        let d = r.random_range(1..=64);
        let n = r.random_range(1..=10_000);
        let (inputs, targets) = common::random_regression(n, d, 10_000 + i);
        let data = RegressionData::new(inputs.clone(), targets.clone()).unwrap();
        let reg = r.random_range(0.1..2.0);
        let model = LinearModel::fit(&data, reg).unwrap();
        let (gram, rhs) = common::normal_equations(&inputs, &targets, reg);
        for (row, b) in gram.iter().zip(&rhs) {
            let lhs: f64 = row.iter().zip(model.theta()).map(|(g, t)| g * t).sum();
            residual = residual.max((lhs - b).abs());
        }
        let ens = (n >= 2).then(|| Arc::new(fit_bootstrap(&data, &MeanTrainer, 10, Aggregator::Mean, i).unwrap()));
        let beta = r.random_range(0.0..3.0);
        let policy = |cpr| LinLcbPolicy { model: model.clone(), ensemble: ens.clone(), config: HybridConfig::new(cpr, beta).unwrap() };
        let (pure, point) = (policy(1.0), policy(0.0));
        let theta = common::solve_dense(&gram, &rhs);
        for u in inputs.iter().take(8) {
            let standalone = lin_lcb_score(&model, u, beta).unwrap();
            lin_gap = lin_gap.max((pure.score(u).unwrap() - standalone).abs());
            let expected = ens.as_ref().map_or(0.0, |e| e.point(u));
            ens_gap = ens_gap.max((point.score(u).unwrap() - expected).abs());
            let quad: f64 = u.iter().zip(common::solve_dense(&gram, u)).map(|(a, b)| a * b).sum();
            let mean: f64 = theta.iter().zip(u).map(|(a, b)| a * b).sum();
            oracle_gap = oracle_gap.max(common::relative_error(standalone, mean - beta * quad.sqrt()));
        }
    }
    let ok = residual <= 1e-10 && lin_gap <= 1e-12 && ens_gap <= 1e-12 && oracle_gap <= 1e-8;
    (
        ok,
        format!(
            "max residual {residual:.2e} (1e-10), cpr=1 gap {lin_gap:.2e}, cpr=0 gap {ens_gap:.2e} (1e-12), dense-oracle rel. gap {oracle_gap:.2e} (1e-8)"
        ),
    )
}

fn curve(rows: &[RegretRow], n: usize) -> f64 {
    rows.iter().find(|r| r.train_size == n && r.group == "all").unwrap().mean_subopt
}

fn regret_decay() -> Outcome {
    let mut cfg = ExperimentConfig::synthetic(
        Algorithm::NeuralLcb,
        EnvConfig::new(Family::Mixed, 4),
        (0..5).collect(),
        vec![100, 5_000],
    );
    cfg.betas = vec![0.1];
    cfg.save_policies = false;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path()).unwrap();
    let (small, large) = (curve(&out.regret, 100), curve(&out.regret, 5_000));
    (
        large <= small / 3.0,
        format!("SubOpt(n=100) = {small:.5}, SubOpt(n=5000) = {large:.5}, ratio {:.3} (need ≤ 0.333)", large / small),
    )
}

fn homogeneous_flatness() -> Outcome {
    let mut cfg = ExperimentConfig::synthetic(
        Algorithm::Hybrid,
        EnvConfig::new(Family::SepticLike, 4),
        (0..5).collect(),
        vec![2_000, 8_000],
    );
    cfg.cprs = vec![0.5];
    cfg.betas = vec![1.0];
    cfg.save_policies = false;
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path()).unwrap();
    let (a, b) = (curve(&out.regret, 2_000), curve(&out.regret, 8_000));
    ((a - b).abs() <= 0.01, format!("SubOpt(2000) = {a:.5}, SubOpt(8000) = {b:.5}, |Δ| = {:.5} (tol 0.01)", (a - b).abs()))
}

fn pessimism_monotonicity() -> Outcome {
    let mut r = rng(8);
    let shape = NetworkShape::new(3, 20, 6).unwrap();
    let w = net::init_weights(shape, 8).unwrap();
    let mut conf = DiagonalConfidence::new(shape.param_count(), 0.1).unwrap();
    let (mut pessimistic, mut monotone, mut decreasing) = (true, true, true);
    for _ in 0..10_000 {
        let u = common::duplicated_input(&mut r, 3);
        let grad = w.gradient(&u).unwrap();
        let point = r.random_range(-1.0..1.0);
        let beta = r.random_range(0.0..5.0);
        let s = lcb_score(point, &grad, &conf, beta, shape.width).unwrap();
        pessimistic &= s <= point;
        if grad.iter().any(|g| *g != 0.0) {
            decreasing &= lcb_score(point, &grad, &conf, beta + 0.5, shape.width).unwrap() < s;
        }
        let before = conf.diag().to_vec();
        conf.update(&grad, shape.width).unwrap();
        monotone &= conf.diag().iter().zip(&before).all(|(a, b)| a >= b);
    }
    (
        pessimistic && monotone && decreasing,
        format!("score ≤ point: {pessimistic}; Λ non-decreasing over 1e4 updates: {monotone}; strictly decreasing in β: {decreasing}"),
    )
}

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::synthetic(Algorithm::NeuralLcb, EnvConfig::new(Family::Mixed, 3), vec![3, 4], vec![100, 400]);
    cfg.betas = vec![0.1, 1.0];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path()).unwrap();
    run_experiment(&cfg, b.path()).unwrap();
    let files = ["regret.csv", "intervals.csv", "coverage.csv"];
    let same: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.path().join(f)).unwrap() == fs::read(b.path().join(f)).unwrap())
        .collect();
    (same.len() == files.len(), format!("byte-identical: {same:?} of {files:?}"))
}

fn csv_round_trip() -> Outcome {
    let mut r = rng(10);
    let families = [Family::Linear, Family::Quadratic, Family::SepticLike, Family::Mixed];
    let mut exact = 0;
    let mut total = 0;
    for i in 0..3u64 {
        let family = families[r.random_range(0..families.len())];
        let raw_dim = r.random_range(1..=8);
        let arms = r.random_range(2..=5);
        let env = Environment::new(EnvConfig {
            arms,
            theta_seed: i,
            ..EnvConfig::new(family, raw_dim)
        })
        .unwrap();
        let data = generate_offline(&env, r.random_range(50..=2_000), 0.1, 20 + i).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &data).unwrap();
        let mut schema = CsvSchema::standard(arms, raw_dim);
        if family == Family::Mixed {
            schema = schema.with_group("group");
        }
        let back = read_csv(buf.as_slice(), &schema).unwrap();
        total += data.len();
        exact += data
            .records()
            .iter()
            .zip(back.records())
            .filter(|(a, b)| a == b && a.reward.to_bits() == b.reward.to_bits())
            .count();
        total += back.len().abs_diff(data.len());
    }
    (exact == total, format!("{exact}/{total} records bit-exact over 3 configurations"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("init-zero", init_zero, 10),
        ("gradient check", gradient_check, 30),
        ("conformal coverage", conformal_coverage, 120),
        ("beta brute-force identity", beta_brute_force, 30),
        ("lin-lcb exactness", linlcb_exactness, 60),
        ("regret decay", regret_decay, 600),
        ("homogeneous-group flatness", homogeneous_flatness, 180),
        ("pessimism and monotonicity", pessimism_monotonicity, 10),
        ("determinism", determinism, 300),
        ("csv round-trip", csv_round_trip, 10),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let elapsed = start.elapsed();
        let (ok, detail) = outcome.unwrap_or_else(|_| (false, "panicked".into()));
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = ok && in_time;
        failed += usize::from(!pass);
        println!(
            "{} criterion {}: {name}: {detail}; {:.1}s (budget {budget}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
