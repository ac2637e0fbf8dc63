//! Ridge LCB and its hybrid with the ensemble point estimate.
//!
//! `Λ_n = λI + Σ x_{t,a_t} x_{t,a_t}ᵀ`, `θ̂_n = Λ_n⁻¹ Σ x_{t,a_t} r_t`, both
//! through one Cholesky factorization. The hybrid score mixes the linear
//! bound with the ensemble estimate through `cpr ∈ [0, 1]`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::conformal::{BootstrapEnsemble, EnsembleSettings, IntervalRecord};
use crate::env::OfflineDataset;
use crate::error::{Error, Result};
use crate::neural_lcb::argmax_first;
use crate::predictor::{FittedModel, PointPredictor, RegressionData};

/// Fitted ridge model with its factorization.
#[derive(Debug, Clone)]
pub struct LinearModel {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    theta: DVector<f64>,
    reg: f64,
    chol: Cholesky<f64, Dyn>,
}

impl LinearModel {
    /// Fits from regression pairs `(x_{t,a_t}, r_t)`.
    pub fn fit(data: &RegressionData, reg: f64) -> Result<Self> {
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {reg}")));
        }
        let d = data.dim();
        if d == 0 {
            return Err(Error::Input("cannot fit a linear model on zero-dimensional data".into()));
        }
        let mut gram = DMatrix::<f64>::identity(d, d) * reg;
        let mut rhs = DVector::<f64>::zeros(d);
        for (t, (x, r)) in data.inputs.iter().zip(&data.targets).enumerate() {
            if x.iter().any(|v| !v.is_finite()) || !r.is_finite() {
                return Err(Error::Input(format!("record {t}: non-finite feature or reward")));
            }
            let xv = DVector::from_column_slice(x);
            gram.ger(1.0, &xv, &xv, 1.0);
            rhs.axpy(*r, &xv, 1.0);
        }
        Self::from_normal_equations(gram, rhs, reg)
    }

    /// Solves `Λ θ = b` by Cholesky with one step of iterative refinement.
    pub fn from_normal_equations(gram: DMatrix<f64>, rhs: DVector<f64>, reg: f64) -> Result<Self> {
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numeric("Gram matrix is not positive definite", f64::NAN))?;
        let mut theta = chol.solve(&rhs);
        let residual = &rhs - &gram * &theta;
        theta += chol.solve(&residual);
        Ok(Self {
            gram,
            rhs,
            theta,
            reg,
            chol,
        })
    }

    pub fn theta(&self) -> &[f64] {
        self.theta.as_slice()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rhs(&self) -> &[f64] {
        self.rhs.as_slice()
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// `‖Λθ̂ − Σ x r‖_∞`.
    pub fn normal_residual(&self) -> f64 {
        (&self.gram * &self.theta - &self.rhs).amax()
    }

    fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::Shape(format!(
                "feature dimension {} != model dimension {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn mean(&self, u: &[f64]) -> Result<f64> {
        self.check(u)?;
        Ok(self.theta.iter().zip(u).map(|(a, b)| a * b).sum())
    }

    /// `sqrt(uᵀ Λ⁻¹ u)` via `‖L⁻¹u‖`.
    pub fn width(&self, u: &[f64]) -> Result<f64> {
        self.check(u)?;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&DVector::from_column_slice(u))
            .ok_or_else(|| Error::numeric("triangular solve failed", f64::NAN))?;
        Ok(v.norm())
    }
}

/// `fit_linear` on the logged pairs of an offline dataset.
pub fn fit_linear(train: &OfflineDataset, reg: f64) -> Result<LinearModel> {
    LinearModel::fit(&train.logged_regression(), reg)
}

/// `⟨θ̂, u⟩ − β · sqrt(uᵀ Λ⁻¹ u)`.
pub fn lin_lcb_score(model: &LinearModel, u: &[f64], beta: f64) -> Result<f64> {
    Ok(model.mean(u)? - beta * model.width(u)?)
}

/// Where `cpr` applies in the hybrid score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HybridForm {
    /// `cpr · (⟨θ̂, u⟩ − β‖u‖) + (1 − cpr) · f̂(u)`.
    #[default]
    Joint,
    /// `cpr · ⟨θ̂, u⟩ − β‖u‖ + (1 − cpr) · f̂(u)`.
    MeanOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    cpr: f64,
    beta: f64,
    #[serde(default)]
    form: HybridForm,
}

impl HybridConfig {
    pub fn new(cpr: f64, beta: f64) -> Result<Self> {
        Self::with_form(cpr, beta, HybridForm::Joint)
    }

    pub fn with_form(cpr: f64, beta: f64, form: HybridForm) -> Result<Self> {
        if !(0.0..=1.0).contains(&cpr) {
            return Err(Error::Config(format!("cpr must lie in [0, 1], got {cpr}")));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
        }
        Ok(Self { cpr, beta, form })
    }

    pub fn cpr(&self) -> f64 {
        self.cpr
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn form(&self) -> HybridForm {
        self.form
    }
}

/// `cpr · lin + (1 − cpr) · ensemble_point`.
pub fn hybrid_score(lin: f64, ensemble_point: f64, cfg: &HybridConfig) -> f64 {
    cfg.cpr * lin + (1.0 - cfg.cpr) * ensemble_point
}

/// Deterministic argmax policy over hybrid scores.
#[derive(Debug, Clone)]
pub struct LinLcbPolicy<M = FittedModel> {
    pub model: LinearModel,
    /// `None` stands for the zero network output at initialization.
    pub ensemble: Option<Arc<BootstrapEnsemble<M>>>,
    pub config: HybridConfig,
}

impl<M: PointPredictor> LinLcbPolicy<M> {
    pub fn score(&self, u: &[f64]) -> Result<f64> {
        let cfg = &self.config;
        // `cpr = 1` never consults the ensemble.
        let point = match &self.ensemble {
            Some(e) if cfg.cpr < 1.0 => e.point(u),
            _ => 0.0,
        };
        match cfg.form {
            HybridForm::Joint => Ok(hybrid_score(lin_lcb_score(&self.model, u, cfg.beta)?, point, cfg)),
            HybridForm::MeanOnly => Ok(cfg.cpr * self.model.mean(u)? - cfg.beta * self.model.width(u)?
                + (1.0 - cfg.cpr) * point),
        }
    }

    pub fn scores(&self, block: &[Vec<f64>]) -> Result<Vec<f64>> {
        if block.is_empty() {
            return Err(Error::Input("empty context block".into()));
        }
        block.iter().map(|u| self.score(u)).collect()
    }

    pub fn act(&self, block: &[Vec<f64>]) -> Result<usize> {
        Ok(argmax_first(&self.scores(block)?))
    }

    /// Mean `β`-free linear width over arms.
    pub fn mean_penalty(&self, block: &[Vec<f64>]) -> Result<f64> {
        let w = block.iter().map(|u| self.model.width(u)).collect::<Result<Vec<_>>>()?;
        Ok(w.iter().sum::<f64>() / w.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct LinLcbRun {
    pub policy: LinLcbPolicy,
    pub intervals: Vec<IntervalRecord>,
}

/// Fits the linear model and the conformal ensemble once each, returning the
/// hybrid policy and the test-stream intervals. With fewer than two training
/// records no ensemble is fit and the ensemble term is zero.
pub fn run_linlcb(
    train: &OfflineDataset,
    test: &OfflineDataset,
    cfg: HybridConfig,
    reg: f64,
    ensemble: &EnsembleSettings,
    seed: u64,
) -> Result<LinLcbRun> {
    let regression = train.logged_regression();
    let model = LinearModel::fit(&regression, reg)?;
    let (ensemble, intervals) = if regression.len() >= 2 {
        let run = ensemble.run(&regression, &test.logged_regression(), seed)?;
        (Some(Arc::new(run.ensemble)), run.intervals)
    } else {
        (None, Vec::new())
    };
    Ok(LinLcbRun {
        policy: LinLcbPolicy {
            model,
            ensemble,
            config: cfg,
        },
        intervals,
    })
}
