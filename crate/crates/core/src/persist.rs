//! Policy directories.
//!
//! ```text
//! policy/
//!   manifest.json        kind, dimensions, decision-rule settings
//!   ensemble.json        aggregator, memberships, member models
//!   ensemble/model_B.bin network members (binary weight format)
//!   snapshots/w_T.bin    neural snapshot weights
//!   snapshots/lambda_T.bin
//!   linear.json          ridge normal equations
//! ```
//!
//! Everything reloads bit-exactly: floats in JSON use shortest round-trip
//! formatting and the linear model is re-solved from its stored normal
//! equations with the same arithmetic that produced it.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::conformal::{Aggregator, BootstrapEnsemble};
use crate::error::{Error, Result};
use crate::lin_lcb::{HybridConfig, LinLcbPolicy, LinearModel};
use crate::net::NetworkWeights;
use crate::neural_lcb::{DiagonalConfidence, PolicyMixture, PolicySnapshot, PointSource, Selection};
use crate::predictor::FittedModel;

const FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    NeuralLcb,
    LinLcb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyManifest {
    pub format: u32,
    pub kind: PolicyKind,
    pub arms: usize,
    pub raw_dim: usize,
    pub dim: usize,
    /// Seed that fixes the mixture draw (neural policies).
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neural: Option<NeuralEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hybrid: Option<HybridConfig>,
    pub has_ensemble: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralEntry {
    pub selection: Selection,
    pub snapshots: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub round: usize,
    pub beta: f64,
    pub reg: f64,
    pub weights: String,
    pub confidence: String,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    aggregator: Aggregator,
    train_len: usize,
    memberships: Vec<Vec<usize>>,
    models: Vec<ModelEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ModelEntry {
    Constant { value: f64 },
    Linear { weights: Vec<f64>, intercept: f64 },
    Network { file: String },
}

#[derive(Serialize, Deserialize)]
struct LinearFile {
    reg: f64,
    dim: usize,
    /// Row-major `Λ`.
    gram: Vec<f64>,
    rhs: Vec<f64>,
}

/// Shape information the manifest records alongside a policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    pub arms: usize,
    pub raw_dim: usize,
}

/// A policy reloaded from disk.
#[derive(Debug, Clone)]
pub enum StoredPolicy {
    Neural { mixture: PolicyMixture, seed: u64 },
    Linear(LinLcbPolicy),
}

impl StoredPolicy {
    pub fn act(&self, block: &[Vec<f64>]) -> Result<usize> {
        match self {
            StoredPolicy::Neural { mixture, seed } => mixture.resolve(*seed).act(block),
            StoredPolicy::Linear(p) => p.act(block),
        }
    }

    pub fn mean_penalty(&self, block: &[Vec<f64>]) -> Result<f64> {
        match self {
            StoredPolicy::Neural { mixture, seed } => mixture.resolve(*seed).mean_penalty(block),
            StoredPolicy::Linear(p) => p.mean_penalty(block),
        }
    }
}

pub fn save_neural(dir: &Path, mixture: &PolicyMixture, dims: PolicyDims, seed: u64) -> Result<()> {
    create_dir(&dir.join("snapshots"))?;
    let mut entries = Vec::with_capacity(mixture.len());
    for s in &mixture.snapshots {
        let weights = format!("snapshots/w_{}.bin", s.round);
        let confidence = format!("snapshots/lambda_{}.bin", s.round);
        s.weights.save(&dir.join(&weights))?;
        write_f64s(&dir.join(&confidence), s.confidence.diag())?;
        entries.push(SnapshotEntry {
            round: s.round,
            beta: s.beta,
            reg: s.confidence.reg(),
            weights,
            confidence,
        });
    }
    let has_ensemble = match &mixture.source {
        PointSource::Ensemble(e) => {
            save_ensemble(dir, e)?;
            true
        }
        PointSource::Live => false,
    };
    write_json(
        &dir.join("manifest.json"),
        &PolicyManifest {
            format: FORMAT,
            kind: PolicyKind::NeuralLcb,
            arms: dims.arms,
            raw_dim: dims.raw_dim,
            dim: mixture.last().weights.shape().input_dim,
            seed,
            neural: Some(NeuralEntry {
                selection: mixture.selection,
                snapshots: entries,
            }),
            hybrid: None,
            has_ensemble,
        },
    )
}

pub fn save_linear(dir: &Path, policy: &LinLcbPolicy, dims: PolicyDims) -> Result<()> {
    create_dir(dir)?;
    let m = &policy.model;
    let d = m.dim();
    let gram = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m.gram()[(i, j)]).collect();
    write_json(
        &dir.join("linear.json"),
        &LinearFile {
            reg: m.reg(),
            dim: d,
            gram,
            rhs: m.rhs().to_vec(),
        },
    )?;
    if let Some(e) = &policy.ensemble {
        save_ensemble(dir, e)?;
    }
    write_json(
        &dir.join("manifest.json"),
        &PolicyManifest {
            format: FORMAT,
            kind: PolicyKind::LinLcb,
            arms: dims.arms,
            raw_dim: dims.raw_dim,
            dim: d,
            seed: 0,
            neural: None,
            hybrid: Some(policy.config),
            has_ensemble: policy.ensemble.is_some(),
        },
    )
}

pub fn read_manifest(dir: &Path) -> Result<PolicyManifest> {
    let m: PolicyManifest = read_json(&dir.join("manifest.json"))?;
    if m.format != FORMAT {
        return Err(Error::Input(format!("unsupported policy format {}", m.format)));
    }
    Ok(m)
}

pub fn load_policy(dir: &Path) -> Result<(PolicyManifest, StoredPolicy)> {
    let manifest = read_manifest(dir)?;
    let ensemble = if manifest.has_ensemble {
        Some(Arc::new(load_ensemble(dir)?))
    } else {
        None
    };
    let policy = match manifest.kind {
        PolicyKind::NeuralLcb => {
            let entry = manifest
                .neural
                .as_ref()
                .ok_or_else(|| Error::Input("neural manifest lacks snapshot list".into()))?;
            let mut snapshots = Vec::with_capacity(entry.snapshots.len());
            for s in &entry.snapshots {
                let weights = NetworkWeights::load(&dir.join(&s.weights))?;
                let diag = read_f64s(&dir.join(&s.confidence))?;
                snapshots.push(PolicySnapshot {
                    weights: Arc::new(weights),
                    confidence: Arc::new(DiagonalConfidence::from_diag(diag, s.reg)?),
                    beta: s.beta,
                    round: s.round,
                });
            }
            let source = match ensemble {
                Some(e) => PointSource::Ensemble(e),
                None => PointSource::Live,
            };
            StoredPolicy::Neural {
                mixture: PolicyMixture::new(snapshots, entry.selection, source)?,
                seed: manifest.seed,
            }
        }
        PolicyKind::LinLcb => {
            let lf: LinearFile = read_json(&dir.join("linear.json"))?;
            if lf.gram.len() != lf.dim * lf.dim || lf.rhs.len() != lf.dim {
                return Err(Error::Shape("linear.json dimensions are inconsistent".into()));
            }
            let gram = DMatrix::from_row_slice(lf.dim, lf.dim, &lf.gram);
            let model = LinearModel::from_normal_equations(gram, DVector::from_vec(lf.rhs), lf.reg)?;
            let config = manifest
                .hybrid
                .ok_or_else(|| Error::Input("linear manifest lacks hybrid config".into()))?;
            StoredPolicy::Linear(LinLcbPolicy {
                model,
                ensemble,
                config,
            })
        }
    };
    Ok((manifest, policy))
}

fn save_ensemble(dir: &Path, ens: &BootstrapEnsemble<FittedModel>) -> Result<()> {
    create_dir(&dir.join("ensemble"))?;
    let mut models = Vec::with_capacity(ens.models().len());
    for (b, m) in ens.models().iter().enumerate() {
        models.push(match m {
            FittedModel::Constant(value) => ModelEntry::Constant { value: *value },
            FittedModel::Linear { weights, intercept } => ModelEntry::Linear {
                weights: weights.clone(),
                intercept: *intercept,
            },
            FittedModel::Network(w) => {
                let file = format!("ensemble/model_{b}.bin");
                w.save(&dir.join(&file))?;
                ModelEntry::Network { file }
            }
        });
    }
    write_json(
        &dir.join("ensemble.json"),
        &EnsembleFile {
            aggregator: ens.aggregator(),
            train_len: ens.train_len(),
            memberships: ens.memberships().to_vec(),
            models,
        },
    )
}

fn load_ensemble(dir: &Path) -> Result<BootstrapEnsemble<FittedModel>> {
    let ef: EnsembleFile = read_json(&dir.join("ensemble.json"))?;
    let models = ef
        .models
        .into_iter()
        .map(|m| {
            Ok(match m {
                ModelEntry::Constant { value } => FittedModel::Constant(value),
                ModelEntry::Linear { weights, intercept } => FittedModel::Linear { weights, intercept },
                ModelEntry::Network { file } => FittedModel::Network(NetworkWeights::load(&dir.join(file))?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BootstrapEnsemble::from_parts(models, ef.memberships, ef.train_len, ef.aggregator)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| Error::file(path, e))?;
    out.flush().map_err(|e| Error::file(path, e))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// `u64` count followed by little-endian `f64` values.
fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::file(PathBuf::from(path), e);
    out.write_all(&(values.len() as u64).to_le_bytes()).map_err(io)?;
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut input = BufReader::new(file);
    let io = |e| Error::file(PathBuf::from(path), e);
    let mut word = [0u8; 8];
    input.read_exact(&mut word).map_err(io)?;
    let n = u64::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        input.read_exact(&mut word).map_err(io)?;
        values.push(f64::from_le_bytes(word));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::EnsembleSettings;
    use crate::env::{generate_offline, EnvConfig, Environment, Family};
    use crate::lin_lcb::run_linlcb;
    use crate::neural_lcb::{run_offline, HyperParams};
    use crate::predictor::{MlpTrainer, RidgeTrainer, TrainerSpec};

    fn env() -> Environment {
        Environment::new(EnvConfig::new(Family::Linear, 3)).unwrap()
    }

    #[test]
    fn neural_policy_round_trips() {
        let env = env();
        let train = generate_offline(&env, 12, 0.1, 1).unwrap();
        let test = generate_offline(&env, 4, 0.1, 2).unwrap();
        let hp = HyperParams {
            width: 8,
            snapshot_stride: 4,
            ensemble: EnsembleSettings {
                trainer: TrainerSpec::Mlp(MlpTrainer { width: 6, epochs: 2, ..Default::default() }),
                bootstrap: 3,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = run_offline(&train, &test, &hp, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let dims = PolicyDims { arms: 2, raw_dim: 3 };
        save_neural(dir.path(), &run.mixture, dims, 5).unwrap();
        let (manifest, loaded) = load_policy(dir.path()).unwrap();
        assert_eq!(manifest.kind, PolicyKind::NeuralLcb);
        let StoredPolicy::Neural { mixture, seed } = &loaded else { panic!("wrong kind") };
        assert_eq!(*seed, 5);
        assert_eq!(mixture.len(), run.mixture.len());
        for (a, b) in mixture.snapshots.iter().zip(&run.mixture.snapshots) {
            assert_eq!(a.weights.params(), b.weights.params());
            assert_eq!(a.confidence.diag(), b.confidence.diag());
        }
        for r in test.records() {
            assert_eq!(loaded.act(&r.features).unwrap(), run.mixture.resolve(5).act(&r.features).unwrap());
        }
    }

    #[test]
    fn linear_policy_round_trips() {
        let env = env();
        let train = generate_offline(&env, 30, 0.1, 3).unwrap();
        let test = generate_offline(&env, 5, 0.1, 4).unwrap();
        let settings = EnsembleSettings {
            trainer: TrainerSpec::Ridge(RidgeTrainer::default()),
            bootstrap: 4,
            ..Default::default()
        };
        let cfg = HybridConfig::new(0.5, 1.0).unwrap();
        let run = run_linlcb(&train, &test, cfg, 1.0, &settings, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_linear(dir.path(), &run.policy, PolicyDims { arms: 2, raw_dim: 3 }).unwrap();
        let (_, loaded) = load_policy(dir.path()).unwrap();
        let StoredPolicy::Linear(p) = &loaded else { panic!("wrong kind") };
        assert_eq!(p.model.theta(), run.policy.model.theta());
        for r in test.records() {
            for u in &r.features {
                assert_eq!(p.score(u).unwrap(), run.policy.score(u).unwrap());
            }
        }
    }

    #[test]
    fn missing_manifest_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_policy(dir.path()).unwrap_err().to_string();
        assert!(err.contains("manifest.json"), "{err}");
    }
}
