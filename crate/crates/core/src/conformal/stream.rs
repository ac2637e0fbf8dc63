use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{PointPredictor, RegressionData};

use super::ensemble::BootstrapEnsemble;
use super::residuals::{optimize_beta_sorted, quantile_sorted, BetaSearch, ResidualSet};

/// `[q̂ + quantile(β̂), q̂ + quantile(1 − α + β̂)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn lower_offset(&self) -> f64 {
        self.lower - self.point
    }

    pub fn upper_offset(&self) -> f64 {
        self.upper - self.point
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Interval around a known point estimate. `sorted` must be ascending.
pub fn interval_from_sorted(
    point: f64,
    sorted: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<PredictionInterval> {
    let lo = quantile_sorted(sorted, beta)?;
    let hi = quantile_sorted(sorted, (1.0 - alpha + beta).min(1.0))?;
    Ok(PredictionInterval {
        point,
        lower: point + lo,
        upper: point + hi,
        alpha,
    })
}

/// Interval at `x` using the ensemble's aggregated LOO point estimate for
/// both endpoints.
pub fn predict_interval<M: PointPredictor>(
    ens: &BootstrapEnsemble<M>,
    residuals: &ResidualSet,
    x: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<PredictionInterval> {
    interval_from_sorted(ens.point(x), &residuals.sorted(), alpha, beta)
}

/// Settings for the streaming interval loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub beta_search: BetaSearch,
    /// Residual refresh cadence `bs`; 1 refreshes after every test point.
    pub refresh_batch: usize,
}

impl Default for ConformalConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.05, 0.1, 0.25],
            beta_search: BetaSearch::default(),
            refresh_batch: 1,
        }
    }
}

impl ConformalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("at least one alpha is required".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha {a} outside (0, 1)")));
        }
        if self.refresh_batch == 0 {
            return Err(Error::Config("refresh batch must be >= 1".into()));
        }
        Ok(())
    }
}

/// One row of the interval log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub index: usize,
    pub q_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub covered: u8,
    pub width: f64,
}

impl IntervalRecord {
    fn new(index: usize, iv: &PredictionInterval, y: f64) -> Self {
        Self {
            index,
            q_hat: iv.point,
            lower: iv.lower,
            upper: iv.upper,
            alpha: iv.alpha,
            covered: iv.contains(y) as u8,
            width: iv.width(),
        }
    }
}

/// Runs the test stream: for each point, issue one interval per `α` from
/// the current residual window, then once `refresh_batch` labels have been
/// revealed slide their residuals `y_j − q̂_j` into the window.
///
/// `β̂` is recomputed only when the window changes.
pub fn run_stream<M: PointPredictor>(
    ens: &BootstrapEnsemble<M>,
    mut residuals: ResidualSet,
    test: &RegressionData,
    cfg: &ConformalConfig,
) -> Result<(Vec<IntervalRecord>, ResidualSet)> {
    cfg.validate()?;
    if residuals.is_empty() {
        return Err(Error::State("residual window is empty".into()));
    }
    if cfg.refresh_batch > residuals.capacity() {
        return Err(Error::Config(format!(
            "refresh batch {} exceeds residual capacity {}",
            cfg.refresh_batch,
            residuals.capacity()
        )));
    }
    let mut out = Vec::with_capacity(test.len() * cfg.alphas.len());
    let mut pending = Vec::with_capacity(cfg.refresh_batch);
    let mut sorted = residuals.sorted();
    let mut betas = betas_for(&sorted, cfg)?;

    for (j, (x, y)) in test.inputs.iter().zip(&test.targets).enumerate() {
        let q = ens.point(x);
        for (&alpha, &beta) in cfg.alphas.iter().zip(&betas) {
            let iv = interval_from_sorted(q, &sorted, alpha, beta)?;
            out.push(IntervalRecord::new(j, &iv, *y));
        }
        pending.push(y - q);
        if pending.len() == cfg.refresh_batch {
            residuals.slide(&pending)?;
            pending.clear();
            sorted = residuals.sorted();
            betas = betas_for(&sorted, cfg)?;
        }
    }
    Ok((out, residuals))
}

fn betas_for(sorted: &[f64], cfg: &ConformalConfig) -> Result<Vec<f64>> {
    cfg.alphas
        .iter()
        .map(|&a| optimize_beta_sorted(sorted, a, cfg.beta_search))
        .collect()
}

pub fn write_intervals<W: Write>(out: W, records: &[IntervalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_intervals<R: Read>(input: R) -> Result<Vec<IntervalRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
