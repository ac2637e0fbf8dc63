//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use offline_lcb::net::NetworkShape;

/// Plain forward pass written directly from the layer definition: `W1`
/// is `m×d`, hidden layers `m×m`, the last layer `1×m`, all row-major and
/// stored back to back.
pub fn forward(shape: NetworkShape, params: &[f64], u: &[f64]) -> f64 {
    let (m, d, depth) = (shape.width, shape.input_dim, shape.depth);
    let mut offset = 0;
    let mut act = u.to_vec();
    let mut cols = d;
    for _ in 0..depth - 1 {
        let mut next = vec![0.0; m];
        for (i, out) in next.iter_mut().enumerate() {
            let row = &params[offset + i * cols..offset + (i + 1) * cols];
            let z: f64 = row.iter().zip(&act).map(|(w, a)| w * a).sum();
            *out = if z > 0.0 { z } else { 0.0 };
        }
        offset += m * cols;
        cols = m;
        act = next;
    }
    let last = &params[offset..offset + m];
    (m as f64).sqrt() * last.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>()
}

/// Central finite-difference gradient of [`forward`].
pub fn fd_gradient(shape: NetworkShape, params: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = forward(shape, &p, u);
            p[i] = orig - h;
            let down = forward(shape, &p, u);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `ceil(q·N)`-th smallest value (1-based, `q = 0` gives the minimum), found
/// by scanning ranks rather than by a closed-form index.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let target = q * n as f64;
    let mut rank = n;
    for r in 1..=n {
        if r as f64 >= target - 1e-9 {
            rank = r;
            break;
        }
    }
    v[rank - 1]
}

/// Exhaustive grid argmin of `quantile(1 − α + β) − quantile(β)` over
/// `{0, s, …, α}`, ties to the smaller `β`.
pub fn brute_force_beta(values: &[f64], alpha: f64, step: f64) -> (f64, f64) {
    let k = (alpha / step).round() as usize;
    let mut best = (f64::NAN, f64::INFINITY);
    for i in 0..=k {
        let beta = if i == k { alpha } else { i as f64 * step };
        let width = quantile(values, (1.0 - alpha + beta).min(1.0)) - quantile(values, beta);
        if width < best.1 {
            best = (beta, width);
        }
    }
    best
}

/// Uniform draw from the unit ball's duplicated image: `½[x; x]` with
/// `‖x‖ ≤ 1`.
pub fn duplicated_input<R: rand::Rng>(rng: &mut R, half: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..half).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let x: Vec<f64> = x.iter().map(|v| 0.5 * v / norm).collect();
    x.iter().chain(x.iter()).copied().collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// `y = ⟨θ, x⟩ + 0.2 + N(0, σ²)` with `x` uniform in `[-0.5, 0.5]^dim` and
/// a fixed `θ`.
pub fn linear_regression(n: usize, dim: usize, sigma: f64, seed: u64) -> offline_lcb::predictor::RegressionData {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let theta: Vec<f64> = (0..dim).map(|j| 1.0 / (j + 1) as f64).collect();
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let mean: f64 = 0.2 + x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>();
        targets.push(mean + noise.sample(&mut rng));
        inputs.push(x);
    }
    offline_lcb::predictor::RegressionData::new(inputs, targets).unwrap()
}

pub fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Gaussian elimination with partial pivoting on a dense copy of `a`.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(row, &v)| row.iter().copied().chain([v]).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (m[i][n] - s) / m[i][i];
    }
    x
}

/// `(λI + Σ x xᵀ, Σ x r)` accumulated entry by entry.
pub fn normal_equations(inputs: &[Vec<f64>], targets: &[f64], reg: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = inputs[0].len();
    let mut gram = vec![vec![0.0; d]; d];
    let mut rhs = vec![0.0; d];
    for (i, row) in gram.iter_mut().enumerate() {
        row[i] = reg;
    }
    for (x, &r) in inputs.iter().zip(targets) {
        for i in 0..d {
            rhs[i] += x[i] * r;
            for j in 0..d {
                gram[i][j] += x[i] * x[j];
            }
        }
    }
    (gram, rhs)
}

/// Random `(inputs, targets)` with inputs inside the unit ball.
pub fn random_regression(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            x.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let targets = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    (inputs, targets)
}
