//! Entropy regularization: smoothed max, Boltzmann policies and the regularized operators.
//!
//! Terminal states of an MDP are left unregularized: their smoothed max is the hard max
//! and their Boltzmann policy is the greedy one-hot.

use crate::error::{Error, Result};
use crate::mdp::{argmax, check_distribution, QFn, StochasticPolicy, TabularMDP, ValueFn};

/// Temperatures at or below this are treated as zero.
pub const LAMBDA_FLOOR: f64 = f64::MIN_POSITIVE;

/// A strongly convex regularizer `Omega` with conjugate `Omega*` and maximizer `grad Omega*`.
pub trait Regularizer {
    /// `Omega(dist)`.
    fn omega(&self, dist: &[f64]) -> f64;
    /// `Omega*(q) = max_p <p, q> - Omega(p)`.
    fn conjugate(&self, q: &[f64]) -> f64;
    /// The maximizing distribution in the conjugate.
    fn maximizer(&self, q: &[f64]) -> Vec<f64>;
    /// `sup_p |Omega(p)|` over distributions on `n_actions` actions.
    fn uniform_bound(&self, n_actions: usize) -> f64;
}

/// `lambda * sum p log p`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyRegularizer {
    pub weight: f64,
}

impl EntropyRegularizer {
    pub fn new(weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be finite and nonnegative, got {weight}"
            )));
        }
        Ok(Self { weight })
    }
}

impl Regularizer for EntropyRegularizer {
    fn omega(&self, dist: &[f64]) -> f64 {
        if self.weight == 0.0 {
            return 0.0;
        }
        self.weight * entropy_term(dist)
    }

    fn conjugate(&self, q: &[f64]) -> f64 {
        smoothed_max(q, self.weight)
    }

    fn maximizer(&self, q: &[f64]) -> Vec<f64> {
        boltzmann_unchecked(q, self.weight)
    }

    fn uniform_bound(&self, n_actions: usize) -> f64 {
        self.weight * (n_actions as f64).ln()
    }
}

fn entropy_term(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum()
}

/// Negative entropy `sum p log p`, with `0 log 0 = 0`.
pub fn neg_entropy(dist: &[f64]) -> Result<f64> {
    check_distribution(dist)?;
    Ok(entropy_term(dist))
}

/// `lambda log sum exp(q / lambda)`, the hard max at `lambda = 0`.
pub fn smoothed_max(q: &[f64], lambda: f64) -> f64 {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lambda <= LAMBDA_FLOOR {
        return m;
    }
    let s: f64 = q.iter().map(|x| ((x - m) / lambda).exp()).sum();
    m + lambda * s.ln()
}

/// `pi(a) ∝ exp(q(a) / lambda)`.
pub fn boltzmann(q: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be nonnegative, got {lambda}"
        )));
    }
    Ok(boltzmann_unchecked(q, lambda))
}

fn boltzmann_unchecked(q: &[f64], lambda: f64) -> Vec<f64> {
    if lambda <= LAMBDA_FLOOR {
        return one_hot(q.len(), argmax(q));
    }
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = q.iter().map(|x| ((x - m) / lambda).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Per-state smoothed max of `q`; terminal states use the hard max.
pub fn state_smoothed_max(mdp: &TabularMDP, q: &QFn, lambda: f64) -> Vec<f64> {
    (0..q.n_states())
        .map(|s| {
            let l = if mdp.is_terminal(s) { 0.0 } else { lambda };
            smoothed_max(q.row(s), l)
        })
        .collect()
}

/// Boltzmann policy of `q` at every state; terminal states get the greedy one-hot.
pub fn boltzmann_policy(mdp: &TabularMDP, q: &QFn, lambda: f64) -> StochasticPolicy {
    let k = q.n_actions();
    let mut probs = Vec::with_capacity(q.n_states() * k);
    for s in 0..q.n_states() {
        let l = if mdp.is_terminal(s) { 0.0 } else { lambda };
        probs.extend(boltzmann_unchecked(q.row(s), l));
    }
    StochasticPolicy::from_rows_unchecked(q.n_states(), k, probs)
}

/// Per-state `Omega(pi(.|s))`, zero at terminal states.
pub fn policy_penalty<R: Regularizer + ?Sized>(
    mdp: &TabularMDP,
    policy: &StochasticPolicy,
    reg: &R,
) -> Vec<f64> {
    (0..policy.n_states())
        .map(|s| if mdp.is_terminal(s) { 0.0 } else { reg.omega(policy.row(s)) })
        .collect()
}

/// `T^pi_Omega V = T^pi V - Omega(pi)`.
pub fn reg_bellman_apply<R: Regularizer + ?Sized>(
    mdp: &TabularMDP,
    policy: &StochasticPolicy,
    v: &ValueFn,
    reg: &R,
) -> Result<ValueFn> {
    let tv = mdp.bellman_apply(policy, v)?;
    let pen = policy_penalty(mdp, policy, reg);
    Ok(ValueFn::new(
        tv.values().iter().zip(&pen).map(|(x, p)| x - p).collect(),
    ))
}

/// `T*_Omega V`, the per-state smoothed max of `Q_V`.
pub fn reg_bellman_max(mdp: &TabularMDP, v: &ValueFn, lambda: f64) -> Result<ValueFn> {
    EntropyRegularizer::new(lambda)?;
    let q = mdp.q_from_v(v)?;
    Ok(ValueFn::new(state_smoothed_max(mdp, &q, lambda)))
}

/// `[T*_Omega Q](s, a) = r(s, a) + gamma E[Omega*(Q(s', .))]`.
pub fn reg_bellman_q_max(mdp: &TabularMDP, q: &QFn, lambda: f64) -> Result<QFn> {
    EntropyRegularizer::new(lambda)?;
    mdp.check_q(q)?;
    let soft = state_smoothed_max(mdp, q, lambda);
    Ok(mdp.q_from_v_raw(&soft))
}

/// `(T^pi_Omega)^m V` by repeated application.
pub fn m_step_reg_apply<R: Regularizer + ?Sized>(
    mdp: &TabularMDP,
    policy: &StochasticPolicy,
    v: &ValueFn,
    reg: &R,
    m: usize,
) -> Result<ValueFn> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let mut out = reg_bellman_apply(mdp, policy, v, reg)?;
    let pen = policy_penalty(mdp, policy, reg);
    for _ in 1..m {
        let tv = mdp.bellman_apply_raw(policy, out.values());
        out = ValueFn::new(tv.values().iter().zip(&pen).map(|(x, p)| x - p).collect());
    }
    Ok(out)
}
