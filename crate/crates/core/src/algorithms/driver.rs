use crate::error::{Error, Result};
use crate::mdp::{
    argmax, sup_dist_slices, QFn, StochasticPolicy, TabularMDP, ValueFn, HARD_ITERATION_CAP,
    REFERENCE_TOL,
};

use super::trace::{IterRecord, RunOptions, RunTrace, Snapshot, StopMetric, StopReason, TraceMeta};

/// `V*`, `Q*` and the optimal policy of an MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub v_star: ValueFn,
    pub q_star: QFn,
    pub policy: StochasticPolicy,
}

impl Reference {
    pub fn solve(mdp: &TabularMDP) -> Result<Self> {
        let (v_star, policy) = mdp.exact_optimal(REFERENCE_TOL)?;
        let q_star = mdp.q_from_v(&v_star)?;
        Ok(Self {
            v_star,
            q_star,
            policy,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Value,
    Q,
}

pub(crate) struct Step {
    pub iterate: Vec<f64>,
    pub policy: StochasticPolicy,
    pub lambda: f64,
    pub eval_err: f64,
    pub impr_err: f64,
}

struct Measure<'a> {
    mdp: &'a TabularMDP,
    reference: Reference,
    kind: Kind,
    cached: Option<(Vec<usize>, QFn)>,
}

impl Measure<'_> {
    fn q_of(&self, x: &[f64]) -> QFn {
        match self.kind {
            Kind::Value => self.mdp.q_from_v_raw(x),
            Kind::Q => QFn::new(self.mdp.n_states(), self.mdp.n_actions(), x.to_vec())
                .expect("iterate has Q shape"),
        }
    }

    fn greedy(&self, q: &QFn) -> Vec<usize> {
        (0..q.n_states()).map(|s| argmax(q.row(s))).collect()
    }

    fn init_gap(&self, x: &[f64]) -> f64 {
        match self.kind {
            Kind::Value => sup_dist_slices(x, self.reference.v_star.values()),
            Kind::Q => sup_dist_slices(x, self.reference.q_star.values()),
        }
    }

    /// `||V - V*||`, or `||Q^pi - Q*||` with `pi` greedy on the Q iterate.
    fn error(&mut self, x: &[f64]) -> Result<f64> {
        match self.kind {
            Kind::Value => Ok(sup_dist_slices(x, self.reference.v_star.values())),
            Kind::Q => {
                let q = self.q_of(x);
                let actions = self.greedy(&q);
                let stale = self.cached.as_ref().is_none_or(|(a, _)| *a != actions);
                if stale {
                    let pi = StochasticPolicy::deterministic(self.mdp.n_actions(), &actions);
                    let v_pi = self.mdp.policy_value(&pi)?;
                    self.cached = Some((actions, self.mdp.q_from_v_raw(v_pi.values())));
                }
                let (_, q_pi) = self.cached.as_ref().expect("cache filled");
                Ok(sup_dist_slices(q_pi.values(), self.reference.q_star.values()))
            }
        }
    }

    fn snapshot(&self, iter: usize, x: &[f64], policy: &StochasticPolicy) -> Snapshot {
        let q = self.q_of(x);
        let greedy = self.greedy(&q);
        let (values, q) = match self.kind {
            Kind::Value => (x.to_vec(), None),
            Kind::Q => (q.max_values().into_inner(), Some(q)),
        };
        Snapshot {
            iter,
            values,
            q,
            policy: policy.clone(),
            greedy,
        }
    }
}

pub(crate) fn drive<F>(
    mdp: &TabularMDP,
    kind: Kind,
    x0: Vec<f64>,
    opts: &RunOptions,
    mut meta: TraceMeta,
    mut step: F,
) -> Result<RunTrace>
where
    F: FnMut(usize, &[f64]) -> Result<Step>,
{
    let max_iters = opts.stop.max_iters.min(HARD_ITERATION_CAP);
    if max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
    }
    if let Some(eps) = opts.stop.eps {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial iterate must be finite".into()));
    }
    let mut measure = Measure {
        mdp,
        reference: Reference::solve(mdp)?,
        kind,
        cached: None,
    };
    meta.init_gap = measure.init_gap(&x0);
    meta.v_max = mdp.v_max();
    meta.layout = mdp.layout();
    meta.n_actions = mdp.n_actions();
    meta.gamma = mdp.discount();

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let mut x = x0;
    for n in 1..=max_iters {
        let out = step(n, &x)?;
        if out.iterate.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("iterate became non-finite at iteration {n}")));
        }
        let gap = sup_dist_slices(&out.iterate, &x);
        x = out.iterate;
        let sup_err = measure.error(&x)?;
        records.push(IterRecord {
            iter: n,
            lambda: out.lambda,
            sup_err,
            gap,
            eval_err: out.eval_err,
            impr_err: out.impr_err,
            bound: None,
        });
        let metric = match opts.stop.metric {
            StopMetric::SuccessiveGap => gap,
            StopMetric::ErrorToOptimum => sup_err,
        };
        let converged = opts.stop.eps.is_some_and(|eps| metric < eps);
        if converged || n == max_iters {
            let reason = match (converged, opts.stop.eps) {
                (true, _) => StopReason::Converged,
                (false, None) => StopReason::Completed,
                (false, Some(_)) => StopReason::CapReached,
            };
            let final_snapshot = measure.snapshot(n, &x, &out.policy);
            return Ok(RunTrace {
                meta,
                records,
                snapshots,
                final_snapshot,
                reason,
            });
        }
        if opts.storage.keeps(n) {
            snapshots.push(measure.snapshot(n, &x, &out.policy));
        }
    }
    unreachable!("loop returns on its last iteration")
}

pub(crate) fn describe_init(x0: &[f64]) -> String {
    if x0.iter().all(|&v| v == 0.0) {
        "zeros".into()
    } else {
        "custom".into()
    }
}

pub(crate) fn base_meta(algorithm: &str, x0: &[f64]) -> TraceMeta {
    TraceMeta {
        algorithm: algorithm.into(),
        m: None,
        alpha: None,
        schedule: None,
        gamma: 0.0,
        n_actions: 0,
        v0: describe_init(x0),
        seed: None,
        init_gap: 0.0,
        v_max: 0.0,
        layout: None,
    }
}
