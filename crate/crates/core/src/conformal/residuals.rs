use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied before taking `ceil(q·N)` so that products like `0.8 · 10`
/// land on the intended order statistic despite rounding.
const RANK_SLACK: f64 = 1e-9;

/// Insertion-ordered residual window with a fixed capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    values: VecDeque<f64>,
    capacity: usize,
}

impl ResidualSet {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Keeps the last `capacity` of `values`.
    pub fn from_values(values: impl IntoIterator<Item = f64>, capacity: usize) -> Self {
        let mut set = Self::with_capacity(capacity);
        for v in values {
            set.push(v);
        }
        set
    }

    /// Appends one residual, evicting the oldest if the window is full.
    pub fn push(&mut self, value: f64) {
        if self.capacity == 0 {
            return;
        }
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(value);
    }

    /// Appends `new_errors` and evicts as many of the oldest entries as
    /// needed to stay within capacity.
    pub fn slide(&mut self, new_errors: &[f64]) -> Result<()> {
        if new_errors.len() > self.capacity {
            return Err(Error::Config(format!(
                "refresh batch of {} exceeds residual capacity {}",
                new_errors.len(),
                self.capacity
            )));
        }
        for &e in new_errors {
            self.push(e);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    /// Sorted copy; NaNs sort last.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        empirical_quantile(self, q)
    }
}

/// `slide_residuals`: functional form of [`ResidualSet::slide`].
pub fn slide_residuals(residuals: &ResidualSet, new_errors: &[f64]) -> Result<ResidualSet> {
    let mut out = residuals.clone();
    out.slide(new_errors)?;
    Ok(out)
}

/// 1-based rank `ceil(q·N)` clamped to `[1, N]`.
pub fn order_statistic_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 - RANK_SLACK).ceil();
    (r.max(1.0) as usize).min(n)
}

/// Quantile of an ascending slice under the `ceil(q·N)` order-statistic
/// convention.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::State("quantile of an empty residual set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Input(format!("quantile level {q} outside [0, 1]")));
    }
    Ok(sorted[order_statistic_rank(q, sorted.len()) - 1])
}

/// Empirical quantile: the `ceil(q·N)`-th smallest residual (1-based), with
/// `q = 0` mapped to the minimum.
pub fn empirical_quantile(values: &ResidualSet, q: f64) -> Result<f64> {
    quantile_sorted(&values.sorted(), q)
}

/// How `β̂` is searched over `[0, α]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum BetaSearch {
    /// Grid `{0, s, 2s, …, α}` with an absolute step `s` dividing `α`.
    Grid(f64),
    /// Grid whose step is `fraction · α`.
    RelativeGrid(f64),
    /// Every breakpoint of the piecewise-constant width function.
    Exact,
}

impl Default for BetaSearch {
    fn default() -> Self {
        BetaSearch::RelativeGrid(0.01)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn grid_points(alpha: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    let k = (alpha / step).round();
    if k < 1.0 || (k * step - alpha).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "grid step {step} does not divide alpha {alpha}"
        )));
    }
    let k = k as usize;
    Ok((0..=k)
        .map(|i| if i == k { alpha } else { i as f64 * step })
        .collect())
}

fn width_at(sorted: &[f64], alpha: f64, beta: f64) -> f64 {
    let hi = sorted[order_statistic_rank((1.0 - alpha + beta).min(1.0), sorted.len()) - 1];
    let lo = sorted[order_statistic_rank(beta, sorted.len()) - 1];
    hi - lo
}

fn argmin_width(sorted: &[f64], alpha: f64, candidates: &[f64]) -> f64 {
    let mut best = candidates[0];
    let mut best_w = width_at(sorted, alpha, best);
    for &b in &candidates[1..] {
        let w = width_at(sorted, alpha, b);
        if w < best_w {
            best_w = w;
            best = b;
        }
    }
    best
}

/// `β̂ = argmin_{β ∈ grid} quantile(1 − α + β) − quantile(β)`, ties to the
/// smaller `β`.
pub fn optimize_beta(residuals: &ResidualSet, alpha: f64, grid_step: f64) -> Result<f64> {
    optimize_beta_sorted(&residuals.sorted(), alpha, BetaSearch::Grid(grid_step))
}

/// [`optimize_beta`] on a pre-sorted slice with any [`BetaSearch`].
pub fn optimize_beta_sorted(sorted: &[f64], alpha: f64, search: BetaSearch) -> Result<f64> {
    check_alpha(alpha)?;
    if sorted.is_empty() {
        return Err(Error::State("cannot optimize beta on empty residuals".into()));
    }
    let candidates = match search {
        BetaSearch::Grid(step) => grid_points(alpha, step)?,
        BetaSearch::RelativeGrid(fraction) => grid_points(alpha, fraction * alpha)?,
        BetaSearch::Exact => exact_candidates(alpha, sorted.len()),
    };
    Ok(argmin_width(sorted, alpha, &candidates))
}

/// Ranks change only where `β·N` or `(1 − α + β)·N` crosses an integer; the
/// width is constant on each half-open piece `(b_i, b_{i+1}]`, so evaluating
/// `0` and every breakpoint covers all attainable widths.
fn exact_candidates(alpha: f64, n: usize) -> Vec<f64> {
    let nf = n as f64;
    let mut c = vec![0.0, alpha];
    for k in 1..=n {
        let a = k as f64 / nf;
        if a <= alpha {
            c.push(a);
        }
        let b = a - (1.0 - alpha);
        if b > 0.0 && b <= alpha {
            c.push(b);
        }
    }
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}
