use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{PointPredictor, RegressionData, Trainer};
use crate::rng;

use super::residuals::ResidualSet;

/// Aggregation function `φ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregator {
    #[default]
    Mean,
    Median,
}

impl Aggregator {
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Aggregator::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Aggregator::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n % 2 == 1 {
                    v[n / 2]
                } else {
                    0.5 * (v[n / 2 - 1] + v[n / 2])
                }
            }
        }
    }

    /// Aggregate of a multiset given as `(value, multiplicity)` pairs.
    fn apply_weighted(self, items: &mut [(f64, usize)]) -> f64 {
        let total: usize = items.iter().map(|(_, c)| c).sum();
        match self {
            Aggregator::Mean => {
                items.iter().map(|(v, c)| v * *c as f64).sum::<f64>() / total as f64
            }
            Aggregator::Median => {
                items.sort_by(|a, b| a.0.total_cmp(&b.0));
                let nth = |k: usize| {
                    // k-th smallest, 0-based
                    let mut seen = 0;
                    for (v, c) in items.iter() {
                        seen += c;
                        if k < seen {
                            return *v;
                        }
                    }
                    items[items.len() - 1].0
                };
                if total % 2 == 1 {
                    nth(total / 2)
                } else {
                    0.5 * (nth(total / 2 - 1) + nth(total / 2))
                }
            }
        }
    }
}

/// Training indices sharing the same set of out-of-bag models.
#[derive(Debug, Clone)]
struct LooGroup {
    models: Vec<usize>,
    count: usize,
    fallback: bool,
}

/// `B` bootstrap models with their index multisets `S_b`.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble<M> {
    models: Vec<M>,
    memberships: Vec<Vec<usize>>,
    aggregator: Aggregator,
    n: usize,
    groups: Vec<LooGroup>,
    group_of: Vec<usize>,
}

impl<M: PointPredictor> BootstrapEnsemble<M> {
    /// Assembles an ensemble from already fitted parts.
    pub fn from_parts(
        models: Vec<M>,
        memberships: Vec<Vec<usize>>,
        n: usize,
        aggregator: Aggregator,
    ) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::Config(format!(
                "an ensemble needs at least 2 models, got {}",
                models.len()
            )));
        }
        if models.len() != memberships.len() {
            return Err(Error::Shape("one membership set per model required".into()));
        }
        if n == 0 {
            return Err(Error::Config("ensemble over zero training points".into()));
        }
        let b_count = models.len();
        let mut in_bag = vec![vec![false; n]; b_count];
        for (b, s) in memberships.iter().enumerate() {
            for &i in s {
                if i >= n {
                    return Err(Error::Shape(format!("membership index {i} out of range {n}")));
                }
                in_bag[b][i] = true;
            }
        }
        let mut by_mask: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut groups: Vec<LooGroup> = Vec::new();
        let mut group_of = Vec::with_capacity(n);
        for i in 0..n {
            let oob: Vec<usize> = (0..b_count).filter(|&b| !in_bag[b][i]).collect();
            let g = *by_mask.entry(oob.clone()).or_insert_with(|| {
                let fallback = oob.is_empty();
                groups.push(LooGroup {
                    models: if fallback { (0..b_count).collect() } else { oob },
                    count: 0,
                    fallback,
                });
                groups.len() - 1
            });
            groups[g].count += 1;
            group_of.push(g);
        }
        Ok(Self {
            models,
            memberships,
            aggregator,
            n,
            groups,
            group_of,
        })
    }

    pub fn models(&self) -> &[M] {
        &self.models
    }

    pub fn memberships(&self) -> &[Vec<usize>] {
        &self.memberships
    }

    pub fn aggregator(&self) -> Aggregator {
        self.aggregator
    }

    pub fn train_len(&self) -> usize {
        self.n
    }

    /// Whether index `i` appears in every bootstrap sample, in which case
    /// its LOO estimate aggregates over all models.
    pub fn is_fallback(&self, i: usize) -> bool {
        self.groups[self.group_of[i]].fallback
    }

    /// Number of training indices that needed the all-models fallback.
    pub fn fallback_count(&self) -> usize {
        self.groups.iter().filter(|g| g.fallback).map(|g| g.count).sum()
    }

    /// Predictions of every model at `x`.
    pub fn model_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }

    /// `f̂_{-i}(x) = φ(f̂_b(x) : i ∉ S_b)`.
    pub fn loo_point(&self, i: usize, x: &[f64]) -> Result<f64> {
        if i >= self.n {
            return Err(Error::Input(format!("training index {i} out of range {}", self.n)));
        }
        let g = &self.groups[self.group_of[i]];
        let preds: Vec<f64> = g.models.iter().map(|&b| self.models[b].predict(x)).collect();
        Ok(self.aggregator.apply(&preds))
    }

    /// `q̂(x) = φ(f̂_{-i}(x) : i = 1..n)`, evaluated through the distinct
    /// out-of-bag patterns so each model is evaluated once.
    pub fn point(&self, x: &[f64]) -> f64 {
        self.point_from_predictions(&self.model_predictions(x))
    }

    /// [`point`](Self::point) from precomputed per-model predictions.
    pub fn point_from_predictions(&self, preds: &[f64]) -> f64 {
        let mut items: Vec<(f64, usize)> = self
            .groups
            .iter()
            .map(|g| {
                let vals: Vec<f64> = g.models.iter().map(|&b| preds[b]).collect();
                (self.aggregator.apply(&vals), g.count)
            })
            .collect();
        self.aggregator.apply_weighted(&mut items)
    }
}

/// Draws `B` with-replacement index sets of size `n` and fits one model per
/// set. Fitting runs in parallel; results do not depend on thread count.
pub fn fit_bootstrap<T: Trainer>(
    train: &RegressionData,
    trainer: &T,
    bootstrap: usize,
    aggregator: Aggregator,
    seed: u64,
) -> Result<BootstrapEnsemble<T::Model>>
where
    T::Model: Send,
{
    let n = train.len();
    if n < 2 {
        return Err(Error::Input(format!("bootstrap needs n >= 2, got {n}")));
    }
    if bootstrap < 2 {
        return Err(Error::Config(format!("bootstrap needs B >= 2, got {bootstrap}")));
    }
    let memberships = sample_memberships(n, bootstrap, seed);
    let models = memberships
        .par_iter()
        .enumerate()
        .map(|(b, s)| {
            trainer
                .fit(train, s, rng::child_seed(seed, b as u64))
                .map_err(|e| Error::Bootstrap {
                    index: b,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    BootstrapEnsemble::from_parts(models, memberships, n, aggregator)
}

/// The index multisets `S_1..S_B` used by [`fit_bootstrap`].
pub fn sample_memberships(n: usize, bootstrap: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::stream(seed, rng::tag::BOOTSTRAP);
    (0..bootstrap)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect()
}

/// Leave-one-out residuals `y_i − f̂_{-i}(x_i)` in training order; the
/// window capacity is `n`.
pub fn train_residuals<M: PointPredictor>(
    ens: &BootstrapEnsemble<M>,
    train: &RegressionData,
) -> Result<ResidualSet> {
    if train.len() != ens.train_len() {
        return Err(Error::Shape(format!(
            "ensemble was fitted on {} records, got {}",
            ens.train_len(),
            train.len()
        )));
    }
    let mut set = ResidualSet::with_capacity(train.len());
    for (i, (x, y)) in train.inputs.iter().zip(&train.targets).enumerate() {
        set.push(y - ens.loo_point(i, x)?);
    }
    Ok(set)
}
