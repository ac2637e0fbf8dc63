use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conformal::EnsembleSettings;
use crate::env::{CsvSchema, EnvConfig};
use crate::error::{Error, Result};
use crate::neural_lcb::{HyperParams, Selection};

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ENV: &str = "OFFLINE_LCB_OUTPUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NeuralLcb,
    /// Pure ridge LCB (`cpr = 1`); the ensemble still produces intervals.
    LinLcb,
    /// Ridge LCB mixed with the ensemble point estimate over the `cprs` grid.
    Hybrid,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::NeuralLcb => "neural-lcb",
            Algorithm::LinLcb => "lin-lcb",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

/// Logged data read from CSV files instead of a synthetic environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    /// Stream for conformal intervals; none when absent.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Evaluation records; labeled files give exact sub-optimality, others
    /// a replay estimate. Defaults to the training file.
    #[serde(default)]
    pub eval: Option<PathBuf>,
    pub arms: usize,
    pub raw_dim: usize,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub group: Option<String>,
    /// Derive rewards from the label column (no reward column).
    #[serde(default)]
    pub classification: bool,
}

impl CsvSource {
    pub fn schema(&self) -> CsvSchema {
        let mut s = match (&self.label, self.classification) {
            (Some(l), true) => CsvSchema::classification(self.arms, self.raw_dim, l),
            (Some(l), false) => CsvSchema::standard(self.arms, self.raw_dim).with_label(l),
            (None, _) => CsvSchema::standard(self.arms, self.raw_dim),
        };
        if let Some(g) = &self.group {
            s = s.with_group(g);
        }
        s
    }
}

/// A full experiment: data source, algorithm, hyperparameter grid, seeds and
/// train-size grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub csv: Option<CsvSource>,
    pub seeds: Vec<u64>,
    pub train_sizes: Vec<usize>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lrs")]
    pub lrs: Vec<f64>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_cprs")]
    pub cprs: Vec<f64>,
    /// Ridge regularization for the linear algorithms.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Neural settings; `step` and `beta` are overridden by the grid.
    #[serde(default = "default_hyper")]
    pub hyper: HyperParams,
    /// Ensemble settings for the linear algorithms (the neural algorithm
    /// uses `hyper.ensemble`).
    #[serde(default)]
    pub ensemble: EnsembleSettings,
    /// Cap on stored mixture snapshots per run; the stride grows with n.
    #[serde(default = "default_max_snapshots")]
    pub max_snapshots: usize,
    #[serde(default = "default_true")]
    pub save_policies: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_test_size() -> usize {
    500
}

fn default_eval_size() -> usize {
    3250
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_lrs() -> Vec<f64> {
    vec![1e-3]
}

fn default_betas() -> Vec<f64> {
    vec![1.0]
}

fn default_cprs() -> Vec<f64> {
    vec![0.5]
}

fn default_lambda() -> f64 {
    1.0
}

fn default_hyper() -> HyperParams {
    HyperParams {
        selection: Selection::Last,
        ..HyperParams::default()
    }
}

fn default_max_snapshots() -> usize {
    64
}

fn default_true() -> bool {
    true
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Minimal neural config on a synthetic environment.
    pub fn synthetic(algorithm: Algorithm, env: EnvConfig, seeds: Vec<u64>, train_sizes: Vec<usize>) -> Self {
        Self {
            algorithm,
            env: Some(env),
            csv: None,
            seeds,
            train_sizes,
            test_size: default_test_size(),
            eval_size: default_eval_size(),
            epsilon: default_epsilon(),
            lrs: default_lrs(),
            betas: default_betas(),
            cprs: default_cprs(),
            lambda: default_lambda(),
            hyper: default_hyper(),
            ensemble: EnsembleSettings::default(),
            max_snapshots: default_max_snapshots(),
            save_policies: true,
            output: default_output(),
        }
    }

    /// Parses TOML, or JSON when the file ends in `.json`. Relative CSV
    /// paths are resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        let mut cfg = Self::parse(&text, is_json)?;
        if let (Some(csv), Some(base)) = (cfg.csv.as_mut(), path.parent()) {
            for p in [Some(&mut csv.train), csv.test.as_mut(), csv.eval.as_mut()].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, json: bool) -> Result<Self> {
        let cfg: Self = if json {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match (&self.env, &self.csv) {
            (Some(_), Some(_)) => return bad("set exactly one of `env` and `csv`".into()),
            (None, None) => return bad("a data source (`env` or `csv`) is required".into()),
            (Some(env), None) => {
                if env.raw_dim == 0 || env.arms < 2 {
                    return bad("env needs raw_dim >= 1 and arms >= 2".into());
                }
                if self.eval_size == 0 {
                    return bad("eval_size must be >= 1".into());
                }
            }
            (None, Some(csv)) => {
                if csv.classification && csv.label.is_none() {
                    return bad("classification CSV needs a label column".into());
                }
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.train_sizes.is_empty() || self.train_sizes[0] == 0 {
            return bad("train_sizes must be nonempty and positive".into());
        }
        if self.train_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("train_sizes must be strictly increasing".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if self.lrs.is_empty() || self.lrs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("lrs must be nonempty and positive".into());
        }
        if self.betas.is_empty() || self.betas.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("betas must be nonempty and >= 0".into());
        }
        if self.algorithm == Algorithm::Hybrid
            && (self.cprs.is_empty() || self.cprs.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return bad("cprs must be nonempty and within [0, 1]".into());
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.max_snapshots == 0 {
            return bad("max_snapshots must be >= 1".into());
        }
        self.hyper.validate()?;
        self.ensemble.conformal.validate()?;
        if self.hyper.ensemble.bootstrap < 2 || self.ensemble.bootstrap < 2 {
            return bad("bootstrap must be >= 2".into());
        }
        Ok(())
    }

    /// Output directory, relocated under `env_root` when that is given and
    /// the configured path is relative.
    pub fn output_dir(&self, env_root: Option<&Path>) -> PathBuf {
        match env_root {
            Some(root) if self.output.is_relative() => root.join(&self.output),
            _ => self.output.clone(),
        }
    }

    /// Grid points in `(lr, beta, cpr)` order; `None` marks an axis the
    /// algorithm does not use.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut points = Vec::new();
        match self.algorithm {
            Algorithm::NeuralLcb => {
                for &lr in &self.lrs {
                    for &beta in &self.betas {
                        points.push(GridPoint { lr: Some(lr), beta, cpr: None });
                    }
                }
            }
            Algorithm::LinLcb => {
                for &beta in &self.betas {
                    points.push(GridPoint { lr: None, beta, cpr: Some(1.0) });
                }
            }
            Algorithm::Hybrid => {
                for &beta in &self.betas {
                    for &cpr in &self.cprs {
                        points.push(GridPoint { lr: None, beta, cpr: Some(cpr) });
                    }
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: Option<f64>,
    pub beta: f64,
    pub cpr: Option<f64>,
}
