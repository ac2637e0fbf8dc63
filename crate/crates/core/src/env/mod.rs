//! Synthetic contextual-bandit environments and logged datasets.
//!
//! Raw per-arm features have dimension `r`; the network and linear models
//! see the preprocessed dimension `d = 2r` produced by
//! [`preprocess_context`]. Reward functions are defined on the normalized
//! raw vector, which is recovered from a preprocessed `u` as
//! `u[..r] + u[r..]`.

mod dataset;

pub use dataset::{
    load_csv, read_csv, write_csv, CsvSchema, OfflineDataset, Record,
};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net;
use crate::rng;

/// Normalizes `raw` into the unit ball (dividing by `max(1, ‖raw‖)`) and
/// duplicates it: `x' = ½[x; x]`.
pub fn preprocess_context(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("non-finite raw feature {v}")));
    }
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 0.5 / norm.max(1.0);
    let half: Vec<f64> = raw.iter().map(|v| v * scale).collect();
    let mut out = Vec::with_capacity(2 * raw.len());
    out.extend_from_slice(&half);
    out.extend_from_slice(&half);
    Ok(out)
}

/// Built-in reward families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `h(x) = clip(⟨θ*, x⟩, 0, 1)` on broadly spread features.
    Linear,
    /// `h(x) = ⟨θ*, x⟩²`.
    Quadratic,
    /// Homogeneous population: every arm's features sit near a shared
    /// center, so rewards vary little across contexts.
    SepticLike,
    /// Heterogeneous population: a `septic_share` fraction of rounds come
    /// from the homogeneous cluster (group 1), the rest from the broad
    /// population (group 0); the reward mixes a linear and a quadratic term.
    Mixed,
}

/// Serializable environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub family: Family,
    pub raw_dim: usize,
    #[serde(default = "default_arms")]
    pub arms: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub theta_seed: u64,
    #[serde(default = "default_septic_share")]
    pub septic_share: f64,
}

fn default_arms() -> usize {
    2
}

fn default_noise() -> f64 {
    0.1
}

fn default_septic_share() -> f64 {
    0.25
}

impl EnvConfig {
    pub fn new(family: Family, raw_dim: usize) -> Self {
        Self {
            family,
            raw_dim,
            arms: default_arms(),
            noise_std: default_noise(),
            theta_seed: 0,
            septic_share: default_septic_share(),
        }
    }
}

/// Spread of the homogeneous cluster around its center.
const CLUSTER_JITTER: f64 = 0.04;
/// Norm of the homogeneous cluster center.
const CLUSTER_RADIUS: f64 = 0.7;

/// A contextual bandit with known reward function.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    config: EnvConfig,
    theta: Vec<f64>,
    theta2: Vec<f64>,
    center: Vec<f64>,
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        if config.raw_dim == 0 {
            return Err(Error::Config("raw_dim must be >= 1".into()));
        }
        if config.arms < 2 {
            return Err(Error::Config(format!("need at least 2 arms, got {}", config.arms)));
        }
        if !(config.noise_std >= 0.0) || !config.noise_std.is_finite() {
            return Err(Error::Config(format!("invalid noise std {}", config.noise_std)));
        }
        if !(0.0..=1.0).contains(&config.septic_share) {
            return Err(Error::Config("septic_share must lie in [0, 1]".into()));
        }
        let mut rng = rng::stream(config.theta_seed, rng::tag::ENV_THETA);
        let theta = positive_unit(&mut rng, config.raw_dim);
        let theta2 = positive_unit(&mut rng, config.raw_dim);
        let center: Vec<f64> = positive_unit(&mut rng, config.raw_dim)
            .into_iter()
            .map(|v| v * CLUSTER_RADIUS)
            .collect();
        Ok(Self {
            config,
            theta,
            theta2,
            center,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn arms(&self) -> usize {
        self.config.arms
    }

    pub fn raw_dim(&self) -> usize {
        self.config.raw_dim
    }

    /// Preprocessed feature dimension `d = 2r`.
    pub fn dim(&self) -> usize {
        2 * self.config.raw_dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Mean reward `h(u)` of a preprocessed per-arm feature.
    pub fn reward(&self, u: &[f64]) -> f64 {
        let r = self.config.raw_dim;
        let x: Vec<f64> = (0..r).map(|j| u[j] + u[j + r]).collect();
        self.reward_raw(&x)
    }

    fn reward_raw(&self, x: &[f64]) -> f64 {
        let lin = net::dot(&self.theta, x);
        let h = match self.config.family {
            Family::Linear | Family::SepticLike => lin,
            Family::Quadratic => lin * lin,
            Family::Mixed => {
                let q = net::dot(&self.theta2, x);
                0.5 * lin + 0.5 * q * q
            }
        };
        h.clamp(0.0, 1.0)
    }

    /// Draws one raw context block (one vector per arm) and its group.
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Vec<f64>>, Option<u32>) {
        let k = self.config.arms;
        match self.config.family {
            Family::Linear | Family::Quadratic => ((0..k).map(|_| self.broad(rng)).collect(), None),
            Family::SepticLike => ((0..k).map(|_| self.clustered(rng)).collect(), None),
            Family::Mixed => {
                if rng.random::<f64>() < self.config.septic_share {
                    ((0..k).map(|_| self.clustered(rng)).collect(), Some(1))
                } else {
                    ((0..k).map(|_| self.signed(rng)).collect(), Some(0))
                }
            }
        }
    }

    fn broad<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let radius: f64 = rng.random();
        positive_unit(rng, self.config.raw_dim)
            .into_iter()
            .map(|v| v * radius)
            .collect()
    }

    /// Uniform radius times a uniformly random direction.
    fn signed<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let radius: f64 = rng.random();
        let mut g: Vec<f64> = (0..self.config.raw_dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        g.iter_mut().for_each(|v| *v *= radius / norm);
        g
    }

    fn clustered<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let jitter = Normal::new(0.0, CLUSTER_JITTER).expect("finite std");
        let mut x: Vec<f64> = self
            .center
            .iter()
            .map(|c| (c + jitter.sample(rng)).abs())
            .collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        x
    }

    /// Draws a preprocessed context block together with per-arm mean rewards.
    pub fn sample_eval_context<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<EvalContext> {
        let (raw, group) = self.sample_raw(rng);
        let features = raw
            .iter()
            .map(|x| preprocess_context(x))
            .collect::<Result<Vec<_>>>()?;
        let values = features.iter().map(|u| self.reward(u)).collect();
        Ok(EvalContext {
            features,
            values,
            group,
        })
    }

    /// Fresh evaluation contexts, deterministic in `seed`.
    pub fn sample_eval(&self, n: usize, seed: u64) -> Result<Vec<EvalContext>> {
        let mut rng = rng::stream(seed, rng::tag::EVAL_DATA);
        (0..n).map(|_| self.sample_eval_context(&mut rng)).collect()
    }
}

/// Context block with known per-arm mean rewards, used for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext {
    pub features: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub group: Option<u32>,
}

impl EvalContext {
    /// `(v*, a*)` with ties to the lowest index.
    pub fn best(&self) -> (f64, usize) {
        argmax(&self.values)
    }
}

fn positive_unit<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            })
            .collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

/// `(max, argmax)` with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> (f64, usize) {
    let mut best = (values[0], 0);
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, a);
        }
    }
    best
}

/// `true_value`: `v*(x) = max_a h(x_a)` and its argmax.
pub fn true_value(env: &Environment, block: &[Vec<f64>]) -> Result<(f64, usize)> {
    if block.is_empty() {
        return Err(Error::Input("empty context block".into()));
    }
    let values: Vec<f64> = block.iter().map(|u| env.reward(u)).collect();
    Ok(argmax(&values))
}

/// Logs `n` rounds under an ε-greedy behavior policy around the true
/// reward maximizer; rewards are `h(x_a) + N(0, σ²)`.
pub fn generate_offline(env: &Environment, n: usize, epsilon: f64, seed: u64) -> Result<OfflineDataset> {
    if n == 0 {
        return Err(Error::Input("n must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, rng::tag::TRAIN_DATA);
    let noise = Normal::new(0.0, env.config.noise_std).expect("validated std");
    let k = env.arms();
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let (raw, group) = env.sample_raw(&mut rng);
        let features = raw
            .iter()
            .map(|x| preprocess_context(x))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<f64> = features.iter().map(|u| env.reward(u)).collect();
        let explore = rng.random::<f64>() < epsilon;
        let action = if explore {
            rng.random_range(0..k)
        } else {
            argmax(&values).1
        };
        let reward = if env.config.noise_std > 0.0 {
            values[action] + noise.sample(&mut rng)
        } else {
            values[action]
        };
        records.push(Record {
            raw,
            features,
            action,
            reward,
            group,
            label: None,
        });
    }
    OfflineDataset::new(records, k, env.raw_dim())
}
