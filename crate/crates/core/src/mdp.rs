//! Tabular MDP model and the exact (unregularized) Bellman machinery.
//!
//! Transition kernels are stored densely as `[state][action][next_state]`,
//! rewards as `[state][action]`. Every state–action row must be a probability
//! distribution. States flagged as terminal are absorbing zero-reward states;
//! the regularized operators in [`crate::regularize`] treat them as having a
//! single effective action, so no entropy bonus accrues there.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default accuracy of the reference solver.
pub const REFERENCE_TOL: f64 = 1e-13;

/// Hard cap on solver iterations.
pub const HARD_ITERATION_CAP: usize = 10_000_000;

/// Width/height of a grid world; state index = `row * width + col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
}

impl GridLayout {
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state % self.width, state / self.width)
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }
}

/// Shared view over the dense tables used by [`sup_dist`].
pub trait Tabular {
    fn shape(&self) -> (usize, usize);
    fn as_slice(&self) -> &[f64];
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFn {
    values: Vec<f64>,
}

impl ValueFn {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n_states: usize) -> Self {
        Self::new(vec![0.0; n_states])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<usize> for ValueFn {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.values[s]
    }
}

impl Tabular for ValueFn {
    fn shape(&self) -> (usize, usize) {
        (self.values.len(), 1)
    }
    fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// State–action values, row-major over states.
#[derive(Clone, Debug, PartialEq)]
pub struct QFn {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QFn {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(mismatch(n_states * n_actions, values.len()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise max over actions.
    pub fn max_values(&self) -> ValueFn {
        ValueFn::new(
            (0..self.n_states)
                .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// Deterministic policy on the row-wise argmax (lowest index on ties).
    pub fn greedy_policy(&self) -> StochasticPolicy {
        let actions: Vec<usize> = (0..self.n_states).map(|s| argmax(self.row(s))).collect();
        StochasticPolicy::deterministic(self.n_actions, &actions)
    }
}

impl Tabular for QFn {
    fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }
    fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Row-stochastic `n_states x n_actions` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(mismatch(n_states * n_actions, probs.len()));
        }
        for s in 0..n_states {
            check_distribution(&probs[s * n_actions..(s + 1) * n_actions])?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub(crate) fn from_rows_unchecked(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states: actions.len(),
            n_actions,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable action per state (lowest index on ties).
    pub fn modes(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }
}

impl Tabular for StochasticPolicy {
    fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }
    fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}

/// Max absolute componentwise difference.
pub fn sup_dist<T: Tabular + ?Sized>(a: &T, b: &T) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(mismatch(format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(sup_dist_slices(a.as_slice(), b.as_slice()))
}

pub(crate) fn sup_dist_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "negative or non-finite entry in {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDistribution(format!("row sums to {sum}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    discount: f64,
    terminal: Vec<bool>,
    layout: Option<GridLayout>,
}

impl TabularMDP {
    /// `transitions[s][a]` is the next-state distribution, `rewards[s][a]` the reward.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        if n_states == 0 {
            return Err(Error::InvalidParameter("MDP needs at least one state".into()));
        }
        let n_actions = transitions[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidParameter("MDP needs at least one action".into()));
        }
        if rewards.len() != n_states {
            return Err(mismatch(n_states, rewards.len()));
        }
        let mut flat_p = Vec::with_capacity(n_states * n_actions * n_states);
        let mut flat_r = Vec::with_capacity(n_states * n_actions);
        for (s, (rows, rs)) in transitions.iter().zip(&rewards).enumerate() {
            if rows.len() != n_actions || rs.len() != n_actions {
                return Err(mismatch(
                    format!("{n_actions} actions at state {s}"),
                    format!("{} transitions / {} rewards", rows.len(), rs.len()),
                ));
            }
            for row in rows {
                if row.len() != n_states {
                    return Err(mismatch(n_states, row.len()));
                }
                flat_p.extend_from_slice(row);
            }
            flat_r.extend_from_slice(rs);
        }
        Self::from_flat(n_states, n_actions, flat_p, flat_r, discount)
    }

    pub fn from_flat(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if transitions.len() != n_states * n_actions * n_states {
            return Err(mismatch(n_states * n_actions * n_states, transitions.len()));
        }
        if rewards.len() != n_states * n_actions {
            return Err(mismatch(n_states * n_actions, rewards.len()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidParameter(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidParameter("rewards must be finite".into()));
        }
        for row in transitions.chunks(n_states) {
            check_distribution(row)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            discount,
            terminal: vec![false; n_states],
            layout: None,
        })
    }

    /// Deterministic MDP from `(next_state, reward)` per state and action.
    pub fn from_deterministic(table: &[Vec<(usize, f64)>], discount: f64) -> Result<Self> {
        let n = table.len();
        let transitions = table
            .iter()
            .map(|acts| {
                acts.iter()
                    .map(|&(next, _)| {
                        let mut row = vec![0.0; n];
                        row[next] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        let rewards = table
            .iter()
            .map(|acts| acts.iter().map(|&(_, r)| r).collect())
            .collect();
        Self::new(transitions, rewards, discount)
    }

    /// Flags terminal states. Each one must be a zero-reward self-loop under every action.
    pub fn with_terminal(mut self, terminal: Vec<bool>) -> Result<Self> {
        if terminal.len() != self.n_states {
            return Err(mismatch(self.n_states, terminal.len()));
        }
        for (s, _) in terminal.iter().enumerate().filter(|(_, t)| **t) {
            for a in 0..self.n_actions {
                let row = self.transition_row(s, a);
                if (row[s] - 1.0).abs() > ROW_SUM_TOL || self.reward(s, a) != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "terminal state {s} must be an absorbing zero-reward state"
                    )));
                }
            }
        }
        self.terminal = terminal;
        Ok(self)
    }

    pub fn with_layout(mut self, layout: GridLayout) -> Result<Self> {
        if layout.n_cells() != self.n_states {
            return Err(mismatch(self.n_states, layout.n_cells()));
        }
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn layout(&self) -> Option<GridLayout> {
        self.layout
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_mask(&self) -> &[bool] {
        &self.terminal
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    /// `max |r(s,a)|`.
    pub fn r_max(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// `r_max / (1 - gamma)`.
    pub fn v_max(&self) -> f64 {
        self.r_max() / (1.0 - self.discount)
    }

    pub(crate) fn expected_next(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }

    pub(crate) fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.reward(s, a) + self.discount * self.expected_next(s, a, v)
    }

    fn check_value(&self, v: &ValueFn) -> Result<()> {
        if v.len() != self.n_states {
            return Err(mismatch(self.n_states, v.len()));
        }
        Ok(())
    }

    pub(crate) fn check_policy(&self, policy: &StochasticPolicy) -> Result<()> {
        if policy.shape() != (self.n_states, self.n_actions) {
            return Err(mismatch(
                format!("{:?}", (self.n_states, self.n_actions)),
                format!("{:?}", policy.shape()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_q(&self, q: &QFn) -> Result<()> {
        if q.shape() != (self.n_states, self.n_actions) {
            return Err(mismatch(
                format!("{:?}", (self.n_states, self.n_actions)),
                format!("{:?}", q.shape()),
            ));
        }
        Ok(())
    }

    /// `T^pi V = r^pi + gamma P^pi V`.
    pub fn bellman_apply(&self, policy: &StochasticPolicy, v: &ValueFn) -> Result<ValueFn> {
        self.check_value(v)?;
        self.check_policy(policy)?;
        Ok(self.bellman_apply_raw(policy, v.values()))
    }

    pub(crate) fn bellman_apply_raw(&self, policy: &StochasticPolicy, v: &[f64]) -> ValueFn {
        ValueFn::new(
            (0..self.n_states)
                .map(|s| {
                    policy
                        .row(s)
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p != 0.0)
                        .map(|(a, p)| p * self.q_value(s, a, v))
                        .sum()
                })
                .collect(),
        )
    }

    /// `Q_V(s, a) = r(s, a) + gamma E[V(s')]`.
    pub fn q_from_v(&self, v: &ValueFn) -> Result<QFn> {
        self.check_value(v)?;
        Ok(self.q_from_v_raw(v.values()))
    }

    pub(crate) fn q_from_v_raw(&self, v: &[f64]) -> QFn {
        let mut values = Vec::with_capacity(self.n_states * self.n_actions);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                values.push(self.q_value(s, a, v));
            }
        }
        QFn {
            n_states: self.n_states,
            n_actions: self.n_actions,
            values,
        }
    }

    /// `T* V`, the pointwise max of `Q_V` over actions.
    pub fn bellman_max(&self, v: &ValueFn) -> Result<ValueFn> {
        self.check_value(v)?;
        Ok(self.q_from_v_raw(v.values()).max_values())
    }

    /// Deterministic greedy policy on `Q_V`; ties go to the lowest action index.
    pub fn greedy_policy(&self, v: &ValueFn) -> Result<StochasticPolicy> {
        Ok(self.q_from_v(v)?.greedy_policy())
    }

    /// `r^pi` and the row-major `P^pi` matrix.
    pub fn policy_kernel(&self, policy: &StochasticPolicy) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_policy(policy)?;
        let n = self.n_states;
        let mut r = vec![0.0; n];
        let mut p = vec![0.0; n * n];
        for s in 0..n {
            for (a, &w) in policy.row(s).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                r[s] += w * self.reward(s, a);
                for (dst, src) in p[s * n..(s + 1) * n].iter_mut().zip(self.transition_row(s, a)) {
                    *dst += w * src;
                }
            }
        }
        Ok((r, p))
    }

    /// `V^pi` from a direct solve of `(I - gamma P^pi) V = r^pi`.
    pub fn policy_value(&self, policy: &StochasticPolicy) -> Result<ValueFn> {
        let (r, p) = self.policy_kernel(policy)?;
        let n = self.n_states;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = if i == j { 1.0 } else { 0.0 } - self.discount * p[i * n + j];
            }
        }
        Ok(ValueFn::new(solve_dense(n, a, r)))
    }

    /// `V` with `||T^pi V - V|| <= tol (1 - gamma)`, hence `||V - V^pi|| <= tol`.
    pub fn policy_evaluation_exact(&self, policy: &StochasticPolicy, tol: f64) -> Result<ValueFn> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        let target = tol * (1.0 - self.discount);
        let mut v = self.policy_value(policy)?;
        // polish the direct solve with fixed-point sweeps
        for _ in 0..10_000 {
            let next = self.bellman_apply_raw(policy, v.values());
            let residual = sup_dist_slices(next.values(), v.values());
            if residual <= target {
                return Ok(v);
            }
            v = next;
        }
        Err(Error::IterationCap {
            cap: 10_000,
            context: format!("policy evaluation residual above {target:e}"),
        })
    }

    /// Value iteration to `||V - V*|| <= tol`, plus the greedy policy.
    pub fn exact_optimal(&self, tol: f64) -> Result<(ValueFn, StochasticPolicy)> {
        self.exact_optimal_with_cap(tol, HARD_ITERATION_CAP)
    }

    pub fn exact_optimal_with_cap(
        &self,
        tol: f64,
        cap: usize,
    ) -> Result<(ValueFn, StochasticPolicy)> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        let gamma = self.discount;
        let gap_target = if gamma == 0.0 {
            f64::INFINITY
        } else {
            tol * (1.0 - gamma) / gamma
        };
        let mut v = ValueFn::zeros(self.n_states);
        for _ in 0..cap {
            let next = self.q_from_v_raw(v.values()).max_values();
            let gap = sup_dist_slices(next.values(), v.values());
            v = next;
            if gap <= gap_target {
                let pi = self.greedy_policy(&v)?;
                return Ok((v, pi));
            }
        }
        Err(Error::IterationCap {
            cap,
            context: "value iteration for the reference solution".into(),
        })
    }
}

/// Gaussian elimination with partial pivoting on a row-major `n x n` system.
fn solve_dense(n: usize, mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    x
}

/// Random MDP with dense Dirichlet-like rows and rewards in `[-1, 1]`.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    discount: f64,
) -> Result<TabularMDP> {
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let mut row: Vec<f64> = (0..n_states)
            .map(|_| {
                // sparsify about a third of the entries
                if rng.gen_bool(0.3) {
                    0.0
                } else {
                    -rng.gen_range(1e-12f64..1.0).ln()
                }
            })
            .collect();
        if row.iter().all(|&x| x == 0.0) {
            let k = rng.gen_range(0..n_states);
            row[k] = 1.0;
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= total);
        transitions.extend(row);
    }
    let rewards = (0..n_states * n_actions)
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    TabularMDP::from_flat(n_states, n_actions, transitions, rewards, discount)
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    discount: f64,
    rewards: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terminal: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<GridLayout>,
}

impl TabularMDP {
    pub fn to_json(&self) -> String {
        let file = MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            discount: self.discount,
            rewards: self.rewards.chunks(self.n_actions).map(<[f64]>::to_vec).collect(),
            transitions: (0..self.n_states)
                .map(|s| {
                    (0..self.n_actions)
                        .map(|a| self.transition_row(s, a).to_vec())
                        .collect()
                })
                .collect(),
            terminal: self.terminal.iter().any(|&t| t).then(|| self.terminal.clone()),
            layout: self.layout,
        };
        serde_json::to_string_pretty(&file).expect("MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mdp = Self::new(file.transitions, file.rewards, file.discount)?;
        if mdp.n_states != file.n_states || mdp.n_actions != file.n_actions {
            return Err(mismatch(
                format!("{} states x {} actions", file.n_states, file.n_actions),
                format!("{} states x {} actions", mdp.n_states, mdp.n_actions),
            ));
        }
        let mdp = match file.terminal {
            Some(t) => mdp.with_terminal(t)?,
            None => mdp,
        };
        match file.layout {
            Some(l) => mdp.with_layout(l),
            None => Ok(mdp),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// s0: a0 -> s0 (r 0), a1 -> s1 (r 1); s1: a0 -> s1 (r 1), a1 -> s0 (r 0).
    fn m2(gamma: f64) -> TabularMDP {
        TabularMDP::from_deterministic(
            &[vec![(0, 0.0), (1, 1.0)], vec![(1, 1.0), (0, 0.0)]],
            gamma,
        )
        .unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_value(rng: &mut ChaCha8Rng, n: usize) -> ValueFn {
        ValueFn::new((0..n).map(|_| rng.gen_range(-10.0..10.0)).collect())
    }

    fn random_policy(rng: &mut ChaCha8Rng, n: usize, k: usize) -> StochasticPolicy {
        let mut probs = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / total));
        }
        // renormalize the last entry so each row sums to 1 to rounding
        for s in 0..n {
            let head: f64 = probs[s * k..s * k + k - 1].iter().sum();
            probs[s * k + k - 1] = 1.0 - head;
        }
        StochasticPolicy::new(n, k, probs).unwrap()
    }

    #[test]
    fn bellman_apply_with_zero_discount_is_expected_reward() {
        let mdp = m2(0.0);
        let pi = StochasticPolicy::uniform(2, 2);
        let out = mdp.bellman_apply(&pi, &ValueFn::new(vec![5.0, -3.0])).unwrap();
        assert_eq!(out.values(), &[0.5, 0.5]);
    }

    #[test]
    fn bellman_apply_hand_evaluation_on_m2() {
        let mdp = m2(0.5);
        let pi = StochasticPolicy::deterministic(2, &[1, 1]);
        let out = mdp.bellman_apply(&pi, &ValueFn::zeros(2)).unwrap();
        assert_eq!(out.values(), &[1.0, 0.0]);
    }

    #[test]
    fn iterated_bellman_apply_reaches_policy_value() {
        let mdp = m2(0.5);
        let pi = StochasticPolicy::deterministic(2, &[0, 0]);
        let mut v = ValueFn::zeros(2);
        for _ in 0..200 {
            v = mdp.bellman_apply(&pi, &v).unwrap();
        }
        assert!((v[0] - 0.0).abs() < 1e-12);
        assert!((v[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bellman_apply_rejects_mismatched_shapes() {
        let mdp = m2(0.5);
        let pi = StochasticPolicy::uniform(3, 2);
        assert!(matches!(
            mdp.bellman_apply(&pi, &ValueFn::zeros(2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let pi = StochasticPolicy::uniform(2, 2);
        assert!(mdp.bellman_apply(&pi, &ValueFn::zeros(3)).is_err());
    }

    #[test]
    fn bellman_max_at_zero_is_max_reward() {
        let mdp = m2(0.5);
        let out = mdp.bellman_max(&ValueFn::zeros(2)).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
    }

    #[test]
    fn bellman_max_fixed_point_on_m2() {
        let mdp = m2(0.5);
        let (v, pi) = mdp.exact_optimal(1e-13).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);
        assert_eq!(pi.modes(), vec![1, 0]);
        let again = mdp.bellman_max(&v).unwrap();
        assert!(sup_dist(&again, &v).unwrap() < 1e-12);
    }

    #[test]
    fn q_from_v_hand_values() {
        let mdp = m2(0.5);
        let q = mdp.q_from_v(&ValueFn::new(vec![2.0, 2.0])).unwrap();
        assert_eq!(q.row(0), &[1.0, 2.0]);
        assert_eq!(q.row(1), &[2.0, 1.0]);
        let q0 = m2(0.0).q_from_v(&ValueFn::new(vec![7.0, 7.0])).unwrap();
        assert_eq!(q0.values(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn greedy_ties_break_to_lowest_index() {
        let mdp = TabularMDP::from_deterministic(
            &[vec![(0, 1.0), (1, 1.0), (0, 1.0)], vec![(1, 1.0), (1, 1.0), (0, 1.0)]],
            0.0,
        )
        .unwrap();
        let pi = mdp.greedy_policy(&ValueFn::zeros(2)).unwrap();
        assert_eq!(pi.modes(), vec![0, 0]);
        assert_eq!(pi.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn greedy_on_m2_optimum() {
        let mdp = m2(0.5);
        let pi = mdp.greedy_policy(&ValueFn::new(vec![2.0, 2.0])).unwrap();
        assert_eq!(pi.modes(), vec![1, 0]);
    }

    #[test]
    fn policy_evaluation_cases() {
        let zero = TabularMDP::from_deterministic(&[vec![(1, 0.0), (0, 0.0)], vec![(0, 0.0), (1, 0.0)]], 0.9)
            .unwrap();
        let v = zero
            .policy_evaluation_exact(&StochasticPolicy::uniform(2, 2), 1e-12)
            .unwrap();
        assert!(v.sup_norm() < 1e-12);

        let mdp = m2(0.5);
        let v = mdp
            .policy_evaluation_exact(&StochasticPolicy::deterministic(2, &[0, 0]), 1e-12)
            .unwrap();
        assert!((v[0]).abs() < 1e-12 && (v[1] - 2.0).abs() < 1e-12);

        assert!(mdp
            .policy_evaluation_exact(&StochasticPolicy::uniform(2, 2), 0.0)
            .is_err());
    }

    #[test]
    fn policy_evaluation_residual_on_random_mdps() {
        let mut r = rng(7);
        for _ in 0..30 {
            let n = r.gen_range(2..7);
            let k = r.gen_range(1..4);
            let mdp = random_mdp(&mut r, n, k, 0.95).unwrap();
            let pi = random_policy(&mut r, n, k);
            let tol = 1e-9;
            let v = mdp.policy_evaluation_exact(&pi, tol).unwrap();
            let tv = mdp.bellman_apply(&pi, &v).unwrap();
            assert!(sup_dist(&v, &tv).unwrap() <= tol * (1.0 - 0.95));
        }
    }

    #[test]
    fn reference_solution_is_stable_in_tolerance() {
        let mut r = rng(3);
        let mdp = random_mdp(&mut r, 6, 3, 0.9).unwrap();
        let (a, _) = mdp.exact_optimal(1e-10).unwrap();
        let (b, _) = mdp.exact_optimal(1e-13).unwrap();
        assert!(sup_dist(&a, &b).unwrap() < 1e-9);
    }

    #[test]
    fn sup_dist_basics() {
        let a = ValueFn::new(vec![0.0, 1.0]);
        let b = ValueFn::new(vec![1.0, 1.0]);
        assert_eq!(sup_dist(&a, &a).unwrap(), 0.0);
        assert_eq!(sup_dist(&a, &b).unwrap(), 1.0);
        assert_eq!(sup_dist(&b, &a).unwrap(), 1.0);
        assert!(sup_dist(&a, &ValueFn::zeros(3)).is_err());
        let mut r = rng(11);
        for _ in 0..100 {
            let x = random_value(&mut r, 5);
            let y = random_value(&mut r, 5);
            let z = random_value(&mut r, 5);
            let lhs = sup_dist(&x, &z).unwrap();
            let rhs = sup_dist(&x, &y).unwrap() + sup_dist(&y, &z).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn contraction_and_greedy_consistency() {
        let mut r = rng(19);
        for _ in 0..100 {
            let n = r.gen_range(1..7);
            let k = r.gen_range(1..5);
            let gamma = r.gen_range(0.0..0.99);
            let mdp = random_mdp(&mut r, n, k, gamma).unwrap();
            let v1 = random_value(&mut r, n);
            let v2 = random_value(&mut r, n);
            let pi = random_policy(&mut r, n, k);
            let d = sup_dist(&v1, &v2).unwrap();
            let tp = sup_dist(
                &mdp.bellman_apply(&pi, &v1).unwrap(),
                &mdp.bellman_apply(&pi, &v2).unwrap(),
            )
            .unwrap();
            let tm = sup_dist(&mdp.bellman_max(&v1).unwrap(), &mdp.bellman_max(&v2).unwrap())
                .unwrap();
            assert!(tp <= gamma * d + 1e-12);
            assert!(tm <= gamma * d + 1e-12);

            let g = mdp.greedy_policy(&v1).unwrap();
            let lhs = mdp.bellman_apply(&g, &v1).unwrap();
            let rhs = mdp.bellman_max(&v1).unwrap();
            assert!(sup_dist(&lhs, &rhs).unwrap() <= 1e-12);

            let q1 = mdp.q_from_v(&v1).unwrap();
            assert!(sup_dist(&q1.max_values(), &rhs).unwrap() <= 1e-12);
            let q2 = mdp.q_from_v(&v2).unwrap();
            assert!(sup_dist(&q1, &q2).unwrap() <= gamma * d + 1e-12);
        }
    }

    #[test]
    fn monotonicity_of_policy_operator() {
        let mut r = rng(23);
        for _ in 0..100 {
            let mdp = random_mdp(&mut r, 5, 3, 0.9).unwrap();
            let v1 = random_value(&mut r, 5);
            let bump: Vec<f64> = (0..5).map(|_| r.gen_range(0.0..3.0)).collect();
            let v2 = ValueFn::new(v1.values().iter().zip(&bump).map(|(a, b)| a + b).collect());
            let pi = random_policy(&mut r, 5, 3);
            let t1 = mdp.bellman_apply(&pi, &v1).unwrap();
            let t2 = mdp.bellman_apply(&pi, &v2).unwrap();
            assert!(t1.values().iter().zip(t2.values()).all(|(a, b)| a <= &(b + 1e-12)));
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(TabularMDP::new(vec![vec![vec![0.5, 0.4]]], vec![vec![0.0]], 0.5).is_err());
        assert!(TabularMDP::from_deterministic(&[vec![(0, 0.0)]], 1.0).is_err());
        assert!(TabularMDP::from_deterministic(&[vec![(0, f64::NAN)]], 0.5).is_err());
        assert!(
            TabularMDP::new(vec![vec![vec![1.5, -0.5], vec![1.0, 0.0]]], vec![vec![0.0, 0.0]], 0.5)
                .is_err()
        );
        let mdp = m2(0.5);
        assert!(mdp.clone().with_terminal(vec![true, false]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_mdp() {
        let mut r = rng(5);
        let mdp = random_mdp(&mut r, 4, 2, 0.8).unwrap();
        let back = TabularMDP::from_json(&mdp.to_json()).unwrap();
        assert_eq!(back, mdp);
        assert!(TabularMDP::from_json("{\"n_states\": 1}").is_err());
    }
}
