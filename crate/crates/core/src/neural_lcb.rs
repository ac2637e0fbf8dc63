//! Neural offline LCB.
//!
//! Round `t` scores every arm of `x_t` with
//! `L_t(u) = f̂(u) − β · ‖∇f_{W^{(t-1)}}(u)/√m‖_{Λ_{t-1}^{-1}}`, records the
//! greedy policy `π̂_t`, adds the squared gradient at the logged pair to the
//! diagonal of `Λ`, and runs `J` proximal SGD epochs on batches drawn from
//! the first `t` records. The point estimate `f̂` is the ensemble's
//! aggregated LOO prediction by default.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conformal::{BootstrapEnsemble, EnsembleSettings, IntervalRecord};
use crate::env::OfflineDataset;
use crate::error::{Error, Result};
use crate::net::{self, NetworkShape, NetworkWeights, TrainBatch};
use crate::predictor::{FittedModel, PointPredictor};
use crate::rng;

/// Diagonal approximation of `Λ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalConfidence {
    diag: Vec<f64>,
    reg: f64,
}

impl DiagonalConfidence {
    /// `Λ_0 = λ I` over `p` parameters.
    pub fn new(p: usize, reg: f64) -> Result<Self> {
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(Error::Config(format!("lambda must be positive, got {reg}")));
        }
        Ok(Self {
            diag: vec![reg; p],
            reg,
        })
    }

    pub fn from_diag(diag: Vec<f64>, reg: f64) -> Result<Self> {
        if let Some(d) = diag.iter().find(|d| !(**d > 0.0)) {
            return Err(Error::State(format!("confidence entry {d} is not positive")));
        }
        Ok(Self { diag, reg })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `‖g/√m‖_{Λ^{-1}} = sqrt(Σ g_i² / (m · Λ_ii))`.
    pub fn penalty(&self, grad: &[f64], width: usize) -> Result<f64> {
        if grad.len() != self.diag.len() {
            return Err(Error::Shape(format!(
                "gradient length {} != {}",
                grad.len(),
                self.diag.len()
            )));
        }
        let m = width as f64;
        let mut acc = 0.0;
        for (g, d) in grad.iter().zip(&self.diag) {
            if !(*d > 0.0) {
                return Err(Error::State(format!("confidence entry {d} is not positive")));
            }
            acc += g * g / d;
        }
        Ok((acc / m).sqrt())
    }

    /// In-place `Λ_ii += g_i² / m`.
    pub fn update(&mut self, grad: &[f64], width: usize) -> Result<()> {
        if grad.len() != self.diag.len() {
            return Err(Error::Shape(format!(
                "gradient length {} != {}",
                grad.len(),
                self.diag.len()
            )));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite gradient in confidence update", f64::NAN));
        }
        let m = width as f64;
        for (d, g) in self.diag.iter_mut().zip(grad) {
            *d += g * g / m;
        }
        Ok(())
    }
}

/// `point − β · ‖g/√m‖_{Λ^{-1}}`.
pub fn lcb_score(
    point: f64,
    grad: &[f64],
    conf: &DiagonalConfidence,
    beta: f64,
    width: usize,
) -> Result<f64> {
    Ok(point - beta * conf.penalty(grad, width)?)
}

/// Functional form of [`DiagonalConfidence::update`].
pub fn update_lambda(conf: &DiagonalConfidence, grad: &[f64], width: usize) -> Result<DiagonalConfidence> {
    let mut next = conf.clone();
    next.update(grad, width)?;
    Ok(next)
}

/// Source of the point estimate in the LCB score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointEstimate {
    /// Aggregated LOO ensemble prediction.
    #[default]
    Ensemble,
    /// Output of the live network `W^{(t-1)}`.
    Live,
}

/// How a [`PolicyMixture`] turns into a single decision rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    #[default]
    UniformSample,
    Last,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// SGD step size `η` (constant across rounds).
    pub step: f64,
    /// Regularization `λ` for both `Λ_0` and the proximal term.
    pub reg: f64,
    /// Confidence scale `β` (constant across rounds).
    pub beta: f64,
    /// SGD epochs `J` per round.
    pub epochs: usize,
    /// Mini-batch size.
    pub batch_size: usize,
    pub depth: usize,
    pub width: usize,
    pub point_estimate: PointEstimate,
    /// Re-fit the ensemble every this many rounds (fresh seed each time).
    pub refit_every: Option<usize>,
    /// Keep every `snapshot_stride`-th policy (the last one is always kept).
    pub snapshot_stride: usize,
    pub selection: Selection,
    pub ensemble: EnsembleSettings,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            step: 1e-3,
            reg: 1e-2,
            beta: 1.0,
            epochs: 1,
            batch_size: 32,
            depth: 2,
            width: 100,
            point_estimate: PointEstimate::default(),
            refit_every: None,
            snapshot_stride: 1,
            selection: Selection::default(),
            ensemble: EnsembleSettings::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("step", self.step), ("reg", self.reg)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 || self.snapshot_stride == 0 {
            return Err(Error::Config("batch_size and snapshot_stride must be >= 1".into()));
        }
        if self.refit_every == Some(0) {
            return Err(Error::Config("refit_every must be >= 1".into()));
        }
        self.ensemble.conformal.validate()
    }
}

/// Frozen policy `π̂_t`: weights `W^{(t-1)}` and confidence `Λ_{t-1}`.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub weights: Arc<NetworkWeights>,
    pub confidence: Arc<DiagonalConfidence>,
    pub beta: f64,
    pub round: usize,
}

/// Per-arm breakdown of an LCB score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmScore {
    pub point: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Point estimator shared by every snapshot of a run.
#[derive(Debug, Clone)]
pub enum PointSource<M = FittedModel> {
    Ensemble(Arc<BootstrapEnsemble<M>>),
    Live,
}

impl<M: PointPredictor> PointSource<M> {
    fn point(&self, live: f64, u: &[f64]) -> f64 {
        match self {
            PointSource::Ensemble(e) => e.point(u),
            PointSource::Live => live,
        }
    }
}

impl PolicySnapshot {
    pub fn scores<M: PointPredictor>(
        &self,
        source: &PointSource<M>,
        block: &[Vec<f64>],
    ) -> Result<Vec<ArmScore>> {
        if block.is_empty() {
            return Err(Error::Input("empty context block".into()));
        }
        let width = self.weights.shape().width;
        block
            .iter()
            .map(|u| {
                let (live, grad) = self.weights.value_and_gradient(u)?;
                let point = source.point(live, u);
                let penalty = self.confidence.penalty(&grad, width)?;
                Ok(ArmScore {
                    point,
                    penalty,
                    score: point - self.beta * penalty,
                })
            })
            .collect()
    }

    pub fn act<M: PointPredictor>(&self, source: &PointSource<M>, block: &[Vec<f64>]) -> Result<usize> {
        let scores: Vec<f64> = self.scores(source, block)?.iter().map(|s| s.score).collect();
        Ok(argmax_first(&scores))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `{π̂_1, …, π̂_n}` with the shared point estimator.
#[derive(Debug, Clone)]
pub struct PolicyMixture<M = FittedModel> {
    pub snapshots: Vec<PolicySnapshot>,
    pub selection: Selection,
    pub source: PointSource<M>,
}

impl<M: PointPredictor> PolicyMixture<M> {
    pub fn new(snapshots: Vec<PolicySnapshot>, selection: Selection, source: PointSource<M>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::State("policy mixture needs at least one snapshot".into()));
        }
        Ok(Self {
            snapshots,
            selection,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn last(&self) -> &PolicySnapshot {
        self.snapshots.last().expect("nonempty")
    }

    /// Uniform draw over the snapshots.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &PolicySnapshot {
        &self.snapshots[rng.random_range(0..self.snapshots.len())]
    }

    /// Fixes the decision rule according to `selection`; the uniform draw is
    /// deterministic in `seed`.
    pub fn resolve(&self, seed: u64) -> ResolvedPolicy<'_, M> {
        let chosen = match self.selection {
            Selection::UniformSample => {
                let mut rng = rng::stream(seed, rng::tag::MIXTURE);
                vec![self.sample(&mut rng)]
            }
            Selection::Last => vec![self.last()],
            Selection::MajorityVote => self.snapshots.iter().collect(),
        };
        ResolvedPolicy {
            snapshots: chosen,
            source: &self.source,
        }
    }
}

/// Deterministic decision rule derived from a mixture.
pub struct ResolvedPolicy<'a, M> {
    snapshots: Vec<&'a PolicySnapshot>,
    source: &'a PointSource<M>,
}

impl<M: PointPredictor> ResolvedPolicy<'_, M> {
    pub fn rounds(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.round).collect()
    }

    pub fn act(&self, block: &[Vec<f64>]) -> Result<usize> {
        if self.snapshots.len() == 1 {
            return self.snapshots[0].act(self.source, block);
        }
        let mut votes = vec![0usize; block.len()];
        for s in &self.snapshots {
            votes[s.act(self.source, block)?] += 1;
        }
        let votes: Vec<f64> = votes.into_iter().map(|v| v as f64).collect();
        Ok(argmax_first(&votes))
    }

    /// Mean LCB penalty over arms of `block` (first snapshot).
    pub fn mean_penalty(&self, block: &[Vec<f64>]) -> Result<f64> {
        let s = self.snapshots[0].scores(self.source, block)?;
        Ok(s.iter().map(|a| a.penalty).sum::<f64>() / s.len() as f64)
    }
}

/// One row of the per-round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub chosen: usize,
    pub logged: usize,
    pub scores: Vec<f64>,
    /// Mean `β`-free penalty over arms.
    pub penalty: f64,
    /// Proximal loss on the last batch after the round's `J` epochs
    /// (NaN when `J = 0`).
    pub loss: f64,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct NeuralLcbRun<M = FittedModel> {
    pub mixture: PolicyMixture<M>,
    pub rounds: Vec<RoundLog>,
    pub intervals: Vec<IntervalRecord>,
    pub final_weights: NetworkWeights,
    pub final_confidence: DiagonalConfidence,
    /// Ensemble that produced `intervals` (the last fit when refitting);
    /// `None` when the training set is too small to bootstrap.
    pub ensemble: Option<Arc<BootstrapEnsemble<M>>>,
}

/// Runs the offline loop over `train` and streams conformal intervals over
/// the logged pairs of `test`.
pub fn run_offline(
    train: &OfflineDataset,
    test: &OfflineDataset,
    hp: &HyperParams,
    seed: u64,
) -> Result<NeuralLcbRun> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if !test.is_empty() && test.dim() != train.dim() {
        return Err(Error::Shape("train and test feature dimensions differ".into()));
    }
    let shape = NetworkShape::new(hp.depth, hp.width, train.dim())?;
    let regression = train.logged_regression();
    let test_regression = test.logged_regression();

    // With fewer than two records the ensemble is undefined; the live network
    // (zero at initialization) then supplies the point estimate.
    let fit = |s: u64| -> Result<(Option<Arc<BootstrapEnsemble<FittedModel>>>, Vec<IntervalRecord>)> {
        if regression.len() < 2 {
            return Ok((None, Vec::new()));
        }
        let run = hp.ensemble.run(&regression, &test_regression, s)?;
        Ok((Some(Arc::new(run.ensemble)), run.intervals))
    };
    let (mut ensemble, mut intervals) = fit(rng::child_seed(seed, 0))?;

    let mut weights = Arc::new(net::init_weights(shape, rng::child_seed(seed, 1))?);
    let mut conf = Arc::new(DiagonalConfidence::new(shape.param_count(), hp.reg)?);
    let mut batch_rng = rng::stream(seed, rng::tag::SGD_BATCH);
    let n = train.len();
    let mut snapshots = Vec::new();
    let mut rounds = Vec::with_capacity(n);

    for t in 1..=n {
        if let Some(k) = hp.refit_every {
            if t > 1 && (t - 1) % k == 0 {
                (ensemble, intervals) = fit(rng::child_seed(seed, t as u64 + 1))?;
            }
        }
        let record = &train.records()[t - 1];
        let source = make_source(hp.point_estimate, &ensemble);
        let snapshot = PolicySnapshot {
            weights: Arc::clone(&weights),
            confidence: Arc::clone(&conf),
            beta: hp.beta,
            round: t,
        };
        let arm_scores = snapshot.scores(&source, &record.features)?;
        let scores: Vec<f64> = arm_scores.iter().map(|s| s.score).collect();
        let chosen = argmax_first(&scores);
        let penalty = arm_scores.iter().map(|s| s.penalty).sum::<f64>() / arm_scores.len() as f64;
        if t % hp.snapshot_stride == 0 || t == n {
            snapshots.push(snapshot);
        } else {
            drop(snapshot);
        }

        let grad = weights.gradient(record.logged_feature())?;
        Arc::make_mut(&mut conf).update(&grad, shape.width)?;

        let mut last_batch = None;
        for _ in 0..hp.epochs {
            let batch = sample_batch(train, t, hp.batch_size, &mut batch_rng);
            weights = Arc::new(net::sgd_epoch(&weights, &batch, hp.step, hp.reg)?);
            last_batch = Some(batch);
        }
        let loss = match &last_batch {
            Some(b) => net::proximal_loss(&weights, b, hp.reg)?,
            None => f64::NAN,
        };
        if last_batch.is_some() && !loss.is_finite() {
            return Err(Error::numeric(format!("round {t}: non-finite loss"), loss));
        }
        rounds.push(RoundLog {
            round: t,
            chosen,
            logged: record.action,
            scores,
            penalty,
            loss,
        });
    }

    let source = make_source(hp.point_estimate, &ensemble);
    let mixture = PolicyMixture::new(snapshots, hp.selection, source)?;
    Ok(NeuralLcbRun {
        mixture,
        rounds,
        intervals,
        final_weights: (*weights).clone(),
        final_confidence: (*conf).clone(),
        ensemble,
    })
}

fn make_source(kind: PointEstimate, ens: &Option<Arc<BootstrapEnsemble<FittedModel>>>) -> PointSource {
    match (kind, ens) {
        (PointEstimate::Ensemble, Some(e)) => PointSource::Ensemble(Arc::clone(e)),
        _ => PointSource::Live,
    }
}

/// Uniform with-replacement batch from the first `t` records.
fn sample_batch<R: Rng + ?Sized>(data: &OfflineDataset, t: usize, size: usize, rng: &mut R) -> TrainBatch {
    let mut batch = TrainBatch::default();
    for _ in 0..size {
        let r = &data.records()[rng.random_range(0..t)];
        batch.inputs.push(r.logged_feature().to_vec());
        batch.targets.push(r.reward);
    }
    batch
}

/// Writes the per-round log: `round,chosen,logged,score_0..score_{K-1},penalty,loss`.
pub fn write_rounds<W: Write>(out: W, rounds: &[RoundLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = rounds.first().map_or(0, |r| r.scores.len());
    let mut header = vec!["round".to_string(), "chosen".into(), "logged".into()];
    header.extend((0..k).map(|a| format!("score_{a}")));
    header.push("penalty".into());
    header.push("loss".into());
    w.write_record(&header)?;
    for r in rounds {
        let mut row = vec![r.round.to_string(), r.chosen.to_string(), r.logged.to_string()];
        row.extend(r.scores.iter().map(|s| s.to_string()));
        row.push(r.penalty.to_string());
        row.push(r.loss.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rounds<R: Read>(input: R) -> Result<Vec<RoundLog>> {
    let mut r = csv::Reader::from_reader(input);
    let k = r.headers()?.iter().filter(|h| h.starts_with("score_")).count();
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row?;
        let field = |j: usize| -> Result<&str> {
            row.get(j).ok_or_else(|| Error::Parse {
                row: i + 1,
                column: j.to_string(),
                message: "short row".into(),
            })
        };
        let num = |j: usize| -> Result<f64> {
            field(j)?.parse().map_err(|e| Error::Parse {
                row: i + 1,
                column: j.to_string(),
                message: format!("{e}"),
            })
        };
        let int = |j: usize| -> Result<usize> {
            field(j)?.parse().map_err(|e| Error::Parse {
                row: i + 1,
                column: j.to_string(),
                message: format!("{e}"),
            })
        };
        out.push(RoundLog {
            round: int(0)?,
            chosen: int(1)?,
            logged: int(2)?,
            scores: (0..k).map(|a| num(3 + a)).collect::<Result<_>>()?,
            penalty: num(3 + k)?,
            loss: num(4 + k)?,
        });
    }
    Ok(out)
}
