use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{GridLayout, QFn, StochasticPolicy};

/// Iterates are kept for every iteration up to this count, then thinned.
pub const DENSE_ITERATES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    /// `||X_N - X_{N-1}||` on the iterate (V or Q).
    #[default]
    SuccessiveGap,
    /// `||V_N - V*||`, or the Q-value regret for Q-based schemes.
    ErrorToOptimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub eps: Option<f64>,
    pub max_iters: usize,
    #[serde(default)]
    pub metric: StopMetric,
}

impl StopRule {
    pub fn eps(eps: f64, max_iters: usize) -> Self {
        Self {
            eps: Some(eps),
            max_iters,
            metric: StopMetric::SuccessiveGap,
        }
    }

    pub fn iterations(n: usize) -> Self {
        Self {
            eps: None,
            max_iters: n,
            metric: StopMetric::SuccessiveGap,
        }
    }

    pub fn with_metric(mut self, metric: StopMetric) -> Self {
        self.metric = metric;
        self
    }
}

/// Which iterates a trace keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Storage {
    /// Every iterate up to [`DENSE_ITERATES`], a logarithmically thinned subset after.
    #[default]
    Thinned,
    /// Only the final iterate.
    FinalOnly,
}

impl Storage {
    pub(crate) fn keeps(&self, iter: usize) -> bool {
        match self {
            Storage::FinalOnly => false,
            Storage::Thinned => {
                if iter <= DENSE_ITERATES {
                    return true;
                }
                let digits = (iter as f64).log10().floor() as u32;
                iter % 10usize.pow(digits.saturating_sub(3)) == 0
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RunOptions {
    pub stop: StopRule,
    pub storage: Storage,
}

impl Default for StopRule {
    fn default() -> Self {
        Self::eps(1e-8, crate::mdp::HARD_ITERATION_CAP)
    }
}

impl RunOptions {
    pub fn new(stop: StopRule) -> Self {
        Self {
            stop,
            storage: Storage::Thinned,
        }
    }

    pub fn final_only(stop: StopRule) -> Self {
        Self {
            stop,
            storage: Storage::FinalOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    /// Ran the requested number of iterations without an accuracy target.
    Completed,
    /// Hit `max_iters` before reaching the accuracy target.
    CapReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub lambda: f64,
    /// `||V_N - V*||` or the Q-value regret.
    pub sup_err: f64,
    /// `||X_N - X_{N-1}||`.
    pub gap: f64,
    pub eval_err: f64,
    pub impr_err: f64,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iter: usize,
    /// `V_N`, or `max_a Q_N` for Q-based schemes.
    pub values: Vec<f64>,
    pub q: Option<QFn>,
    pub policy: StochasticPolicy,
    /// Greedy action per state, lowest index on ties.
    pub greedy: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub algorithm: String,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub schedule: Option<String>,
    pub gamma: f64,
    pub n_actions: usize,
    pub v0: String,
    pub seed: Option<u64>,
    /// `||X_0 - X*||`.
    pub init_gap: f64,
    pub v_max: f64,
    pub layout: Option<GridLayout>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub meta: TraceMeta,
    pub records: Vec<IterRecord>,
    pub snapshots: Vec<Snapshot>,
    pub final_snapshot: Snapshot,
    pub reason: StopReason,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn converged_at(&self) -> Option<usize> {
        (self.reason == StopReason::Converged).then(|| self.iterations())
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(self.meta.init_gap, |r| r.sup_err)
    }

    pub fn record(&self, iter: usize) -> Option<&IterRecord> {
        iter.checked_sub(1).and_then(|i| self.records.get(i))
    }

    pub fn snapshot(&self, iter: usize) -> Option<&Snapshot> {
        if self.final_snapshot.iter == iter {
            return Some(&self.final_snapshot);
        }
        self.snapshots
            .binary_search_by_key(&iter, |s| s.iter)
            .ok()
            .map(|i| &self.snapshots[i])
    }

    pub fn sup_errs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.sup_err).collect()
    }

    pub fn eval_errs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.eval_err).collect()
    }

    pub fn impr_errs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.impr_err).collect()
    }

    /// Fills the bound column; `bounds[i]` belongs to iteration `i + 1`.
    pub fn attach_bounds(&mut self, bounds: &[f64]) {
        for (r, b) in self.records.iter_mut().zip(bounds) {
            r.bound = Some(*b);
        }
    }

    /// CSV with header `iter,lambda,sup_err,eval_err,impr_err,bound`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,lambda,sup_err,eval_err,impr_err,bound\n");
        for r in &self.records {
            let bound = r.bound.map(|b| format!("{b:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{}",
                r.iter, r.lambda, r.sup_err, r.eval_err, r.impr_err, bound
            );
        }
        out
    }
}

/// Per-cell view of one iterate on a grid MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub iter: usize,
    pub layout: GridLayout,
    pub values: Vec<f64>,
    pub best_action: Vec<usize>,
}

impl GridSnapshot {
    pub fn cell(&self, col: usize, row: usize) -> (f64, usize) {
        let s = self.layout.index(col, row);
        (self.values[s], self.best_action[s])
    }

    /// CSV with header `col,row,value,best_action`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("col,row,value,best_action\n");
        for s in 0..self.layout.n_cells() {
            let (c, r) = self.layout.coords(s);
            let _ = writeln!(out, "{c},{r},{:e},{}", self.values[s], self.best_action[s]);
        }
        out
    }
}

/// Grid view of iteration `iter`.
pub fn policy_snapshot(trace: &RunTrace, iter: usize) -> Result<GridSnapshot> {
    let layout = trace.meta.layout.ok_or(Error::NoSpatialLayout)?;
    let snap = trace.snapshot(iter).ok_or_else(|| {
        Error::InvalidParameter(format!("iteration {iter} is not stored in the trace"))
    })?;
    Ok(GridSnapshot {
        iter,
        layout,
        values: snap.values.clone(),
        best_action: snap.greedy.clone(),
    })
}
