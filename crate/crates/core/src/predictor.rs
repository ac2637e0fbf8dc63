//! Point predictors used as bootstrap ensemble members.
//!
//! A [`Trainer`] fits a model on a subset of a [`RegressionData`] given by
//! (possibly repeated) row indices. The built-in trainers all produce a
//! [`FittedModel`], which is what policy directories serialize.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{self, NetworkShape, NetworkWeights, TrainBatch};
use crate::rng;

/// Regression pairs `(x_i, y_i)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressionData {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl RegressionData {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(first) = inputs.first() {
            if inputs.iter().any(|x| x.len() != first.len()) {
                return Err(Error::Shape("inputs have mixed dimensions".into()));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

pub trait PointPredictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;
}

impl<F> PointPredictor for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Point-predictor factory `F`.
pub trait Trainer: Sync {
    type Model: PointPredictor;

    /// Fits on `data` restricted to `indices` (duplicates allowed).
    fn fit(&self, data: &RegressionData, indices: &[usize], seed: u64) -> Result<Self::Model>;
}

/// Models produced by the built-in trainers.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Constant(f64),
    Linear { weights: Vec<f64>, intercept: f64 },
    Network(NetworkWeights),
}

impl PointPredictor for FittedModel {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Constant(c) => *c,
            FittedModel::Linear { weights, intercept } => intercept + net::dot(weights, x),
            FittedModel::Network(w) => w.forward_unchecked(x),
        }
    }
}

/// Predicts the (bootstrap-sample) mean of the targets.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanTrainer;

impl Trainer for MeanTrainer {
    type Model = FittedModel;

    fn fit(&self, data: &RegressionData, indices: &[usize], _seed: u64) -> Result<FittedModel> {
        if indices.is_empty() {
            return Err(Error::Input("cannot fit on an empty sample".into()));
        }
        let s: f64 = indices.iter().map(|&i| data.targets[i]).sum();
        Ok(FittedModel::Constant(s / indices.len() as f64))
    }
}

/// Ridge regression with an unpenalized intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeTrainer {
    pub lambda: f64,
}

impl Default for RidgeTrainer {
    fn default() -> Self {
        Self { lambda: 1e-3 }
    }
}

impl Trainer for RidgeTrainer {
    type Model = FittedModel;

    fn fit(&self, data: &RegressionData, indices: &[usize], _seed: u64) -> Result<FittedModel> {
        if indices.is_empty() {
            return Err(Error::Input("cannot fit on an empty sample".into()));
        }
        let d = data.dim();
        let k = d + 1;
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        let mut z = vec![0.0; k];
        for &i in indices {
            z[..d].copy_from_slice(&data.inputs[i]);
            z[d] = 1.0;
            let y = data.targets[i];
            for a in 0..k {
                rhs[a] += z[a] * y;
                for b in 0..k {
                    gram[(a, b)] += z[a] * z[b];
                }
            }
        }
        for a in 0..d {
            gram[(a, a)] += self.lambda;
        }
        // keeps the system definite when all sampled rows coincide
        gram[(d, d)] += 1e-12;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::numeric("ridge system is not positive definite", f64::NAN))?;
        let sol = chol.solve(&rhs);
        Ok(FittedModel::Linear {
            weights: sol.as_slice()[..d].to_vec(),
            intercept: sol[d],
        })
    }
}

/// Trains a symmetric-initialized ReLU network with mini-batch proximal SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpTrainer {
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub step: f64,
    pub reg: f64,
}

impl Default for MlpTrainer {
    fn default() -> Self {
        Self {
            depth: 2,
            width: 100,
            epochs: 20,
            batch_size: 32,
            step: 0.01,
            reg: 1e-4,
        }
    }
}

impl Trainer for MlpTrainer {
    type Model = FittedModel;

    fn fit(&self, data: &RegressionData, indices: &[usize], seed: u64) -> Result<FittedModel> {
        if indices.is_empty() {
            return Err(Error::Input("cannot fit on an empty sample".into()));
        }
        let shape = NetworkShape::new(self.depth, self.width, data.dim())?;
        let mut w = net::init_weights(shape, seed)?;
        let mut order = indices.to_vec();
        let mut rng = rng::stream(seed, rng::tag::TRAINER);
        let bs = self.batch_size.max(1);
        for _ in 0..self.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(bs) {
                let batch = TrainBatch {
                    inputs: chunk.iter().map(|&i| data.inputs[i].clone()).collect(),
                    targets: chunk.iter().map(|&i| data.targets[i]).collect(),
                };
                w = net::sgd_step(&w, &batch, self.step, self.reg)?.0;
            }
        }
        Ok(FittedModel::Network(w))
    }
}

/// Trainer selected by name in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainerSpec {
    Mean,
    Ridge(RidgeTrainer),
    Mlp(MlpTrainer),
}

impl Default for TrainerSpec {
    fn default() -> Self {
        TrainerSpec::Mlp(MlpTrainer::default())
    }
}

impl Trainer for TrainerSpec {
    type Model = FittedModel;

    fn fit(&self, data: &RegressionData, indices: &[usize], seed: u64) -> Result<FittedModel> {
        match self {
            TrainerSpec::Mean => MeanTrainer.fit(data, indices, seed),
            TrainerSpec::Ridge(t) => t.fit(data, indices, seed),
            TrainerSpec::Mlp(t) => t.fit(data, indices, seed),
        }
    }
}
