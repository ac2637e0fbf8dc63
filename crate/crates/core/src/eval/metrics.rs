use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conformal::IntervalRecord;
use crate::env::{EvalContext, OfflineDataset};
use crate::error::{Error, Result};

/// Mean sub-optimality `v*(x) − h(x_{π(x)})` over `eval`.
pub fn suboptimality<P>(mut policy: P, eval: &[EvalContext]) -> Result<f64>
where
    P: FnMut(&[Vec<f64>]) -> Result<usize>,
{
    Ok(suboptimality_by_group(&mut policy, eval)?.overall)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSubOpt {
    pub group: u32,
    pub subopt: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubOptBreakdown {
    pub overall: f64,
    pub count: usize,
    /// Per-group means, ascending by group; empty when no context has a group.
    pub groups: Vec<GroupSubOpt>,
}

pub fn suboptimality_by_group<P>(mut policy: P, eval: &[EvalContext]) -> Result<SubOptBreakdown>
where
    P: FnMut(&[Vec<f64>]) -> Result<usize>,
{
    if eval.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let mut total = 0.0;
    let mut groups: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for ctx in eval {
        let a = policy(&ctx.features)?;
        let value = *ctx
            .values
            .get(a)
            .ok_or_else(|| Error::State(format!("policy chose arm {a} of {}", ctx.values.len())))?;
        let gap = ctx.best().0 - value;
        total += gap;
        if let Some(g) = ctx.group {
            let e = groups.entry(g).or_insert((0.0, 0));
            e.0 += gap;
            e.1 += 1;
        }
    }
    Ok(SubOptBreakdown {
        overall: total / eval.len() as f64,
        count: eval.len(),
        groups: groups
            .into_iter()
            .map(|(group, (s, count))| GroupSubOpt {
                group,
                subopt: s / count as f64,
                count,
            })
            .collect(),
    })
}

/// Replay estimate on logged data without per-arm values.
///
/// The policy value is the mean logged reward over rounds where the policy
/// agrees with the logged action; the reference is the best single arm's
/// mean logged reward. Unbiased only under uniform logging; it can go
/// negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayEstimate {
    pub policy_value: f64,
    pub best_arm_value: f64,
    pub matched: usize,
}

impl ReplayEstimate {
    pub fn subopt(&self) -> f64 {
        self.best_arm_value - self.policy_value
    }
}

pub fn replay_suboptimality<P>(mut policy: P, data: &OfflineDataset) -> Result<ReplayEstimate>
where
    P: FnMut(&[Vec<f64>]) -> Result<usize>,
{
    if data.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    let k = data.arms();
    let mut arm_sum = vec![0.0; k];
    let mut arm_count = vec![0usize; k];
    let (mut matched_sum, mut matched) = (0.0, 0usize);
    for r in data.records() {
        arm_sum[r.action] += r.reward;
        arm_count[r.action] += 1;
        if policy(&r.features)? == r.action {
            matched_sum += r.reward;
            matched += 1;
        }
    }
    if matched == 0 {
        return Err(Error::Input("policy never agrees with the logged actions".into()));
    }
    let best_arm_value = arm_sum
        .iter()
        .zip(&arm_count)
        .filter(|(_, c)| **c > 0)
        .map(|(s, c)| s / *c as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ReplayEstimate {
        policy_value: matched_sum / matched as f64,
        best_arm_value,
        matched,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub alpha: f64,
    pub coverage: f64,
    pub width: f64,
    pub count: usize,
}

/// Per-`α` coverage and width, ascending in `α`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

impl CoverageReport {
    pub fn get(&self, alpha: f64) -> Option<&CoverageRow> {
        self.rows.iter().find(|r| r.alpha == alpha)
    }
}

/// Coverage of `labels[record.index]` by each record's interval, grouped
/// by `α`. Every `α` must cover exactly the indices `0..labels.len()`.
pub fn coverage_width(records: &[IntervalRecord], labels: &[f64]) -> Result<CoverageReport> {
    let mut by_alpha: BTreeMap<u64, Vec<&IntervalRecord>> = BTreeMap::new();
    for r in records {
        by_alpha.entry(r.alpha.to_bits()).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(by_alpha.len());
    for group in by_alpha.values() {
        let alpha = group[0].alpha;
        if group.len() != labels.len() {
            return Err(Error::Shape(format!(
                "alpha {alpha}: {} intervals but {} labels",
                group.len(),
                labels.len()
            )));
        }
        let (mut covered, mut width) = (0usize, 0.0);
        for r in group {
            let y = *labels.get(r.index).ok_or_else(|| {
                Error::Shape(format!("interval index {} has no label", r.index))
            })?;
            covered += (r.lower <= y && y <= r.upper) as usize;
            width += r.upper - r.lower;
        }
        rows.push(CoverageRow {
            alpha,
            coverage: covered as f64 / group.len() as f64,
            width: width / group.len() as f64,
            count: group.len(),
        });
    }
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(CoverageReport { rows })
}

/// Coverage from the `covered` flags already stored in the records.
pub fn coverage_from_records(records: &[IntervalRecord]) -> CoverageReport {
    let mut by_alpha: BTreeMap<u64, (f64, usize, f64, usize)> = BTreeMap::new();
    for r in records {
        let e = by_alpha.entry(r.alpha.to_bits()).or_insert((r.alpha, 0, 0.0, 0));
        e.1 += r.covered as usize;
        e.2 += r.width;
        e.3 += 1;
    }
    let mut rows: Vec<CoverageRow> = by_alpha
        .into_values()
        .map(|(alpha, c, w, n)| CoverageRow {
            alpha,
            coverage: c as f64 / n as f64,
            width: w / n as f64,
            count: n,
        })
        .collect();
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    CoverageReport { rows }
}

/// Learning curve for one algorithm, hyperparameter setting and group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub algorithm: String,
    pub group: String,
    pub train_sizes: Vec<usize>,
    pub mean_subopt: Vec<f64>,
    pub std_subopt: Vec<f64>,
    pub hyper: BTreeMap<String, f64>,
}

impl RegretReport {
    pub fn validate(&self) -> Result<()> {
        if self.train_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::State("train-size grid is not strictly increasing".into()));
        }
        if self.mean_subopt.len() != self.train_sizes.len() || self.std_subopt.len() != self.train_sizes.len() {
            return Err(Error::Shape("regret columns have mismatched lengths".into()));
        }
        if let Some(v) = self.mean_subopt.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::State(format!("negative sub-optimality {v}")));
        }
        Ok(())
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
