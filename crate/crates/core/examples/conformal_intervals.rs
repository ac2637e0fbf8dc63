//! Bootstrap-ensemble conformal intervals on a noisy linear signal,
//! reporting empirical coverage and mean width per significance level.

use offline_lcb::conformal::{ensemble_cp, Aggregator, BetaSearch, ConformalConfig};
use offline_lcb::eval::coverage_from_records;
use offline_lcb::predictor::{RegressionData, RidgeTrainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sample(n: usize, seed: u64) -> RegressionData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let inputs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..3).map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    let targets = inputs
        .iter()
        .map(|x| 0.2 + x[0] + 0.5 * x[1] - 0.3 * x[2] + noise.sample(&mut rng))
        .collect();
    RegressionData::new(inputs, targets).unwrap()
}

fn main() -> offline_lcb::Result<()> {
    let (train, test) = (sample(500, 1), sample(500, 2));
    for search in [BetaSearch::RelativeGrid(0.01), BetaSearch::Exact] {
        let cfg = ConformalConfig {
            alphas: vec![0.05, 0.1, 0.25],
            beta_search: search,
            refresh_batch: 10,
        };
        let run = ensemble_cp(&train, &test, &RidgeTrainer::default(), 10, Aggregator::Mean, &cfg, 0)?;
        println!("beta search {search:?}");
        for row in coverage_from_records(&run.intervals).rows {
            println!("  alpha={:<5} coverage={:.3} width={:.4}", row.alpha, row.coverage, row.width);
        }
    }
    Ok(())
}
