//! Bootstrap-ensemble conformal prediction.
//!
//! `B` models are fitted on with-replacement resamples of the training set.
//! Each training point gets a leave-one-out estimate from the models whose
//! resample excluded it; the resulting residuals calibrate asymmetric
//! intervals whose lower/upper split `β̂` is chosen to minimize width. On
//! the test stream, fresh residuals replace the oldest ones in a FIFO window
//! every `refresh_batch` points.

mod ensemble;
mod residuals;
mod stream;

pub use ensemble::{fit_bootstrap, sample_memberships, train_residuals, Aggregator, BootstrapEnsemble};
pub use residuals::{
    empirical_quantile, optimize_beta, optimize_beta_sorted, order_statistic_rank, quantile_sorted,
    slide_residuals, BetaSearch, ResidualSet,
};
pub use stream::{
    interval_from_sorted, predict_interval, read_intervals, run_stream, write_intervals,
    ConformalConfig, IntervalRecord, PredictionInterval,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::predictor::{FittedModel, PointPredictor, RegressionData, Trainer, TrainerSpec};

/// Ensemble and interval settings shared by both LCB algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSettings {
    #[serde(default)]
    pub trainer: TrainerSpec,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub aggregator: Aggregator,
    #[serde(default)]
    pub conformal: ConformalConfig,
}

fn default_bootstrap() -> usize {
    10
}

impl Default for EnsembleSettings {
    fn default() -> Self {
        Self {
            trainer: TrainerSpec::default(),
            bootstrap: default_bootstrap(),
            aggregator: Aggregator::default(),
            conformal: ConformalConfig::default(),
        }
    }
}

impl EnsembleSettings {
    /// [`ensemble_cp`] with these settings.
    pub fn run(
        &self,
        train: &RegressionData,
        test: &RegressionData,
        seed: u64,
    ) -> Result<ConformalRun<FittedModel>> {
        ensemble_cp(
            train,
            test,
            &self.trainer,
            self.bootstrap,
            self.aggregator,
            &self.conformal,
            seed,
        )
    }
}

/// Output of a full ensemble conformal pass.
#[derive(Debug, Clone)]
pub struct ConformalRun<M> {
    pub ensemble: BootstrapEnsemble<M>,
    pub intervals: Vec<IntervalRecord>,
    pub residuals: ResidualSet,
}

/// Fits the ensemble on `train`, computes LOO residuals, and streams
/// intervals over `test`.
pub fn ensemble_cp<T: Trainer>(
    train: &RegressionData,
    test: &RegressionData,
    trainer: &T,
    bootstrap: usize,
    aggregator: Aggregator,
    cfg: &ConformalConfig,
    seed: u64,
) -> Result<ConformalRun<T::Model>>
where
    T::Model: Send + PointPredictor,
{
    let ensemble = fit_bootstrap(train, trainer, bootstrap, aggregator, seed)?;
    let residuals = train_residuals(&ensemble, train)?;
    let (intervals, residuals) = if test.is_empty() {
        (Vec::new(), residuals)
    } else {
        run_stream(&ensemble, residuals, test, cfg)?
    };
    Ok(ConformalRun {
        ensemble,
        intervals,
        residuals,
    })
}
