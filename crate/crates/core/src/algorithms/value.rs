use crate::error::{mismatch, Error, Result};
use crate::mdp::{QFn, StochasticPolicy, TabularMDP, ValueFn};
use crate::regularize::{boltzmann_policy, policy_penalty, state_smoothed_max, EntropyRegularizer};
use crate::schedule::Schedule;

use super::driver::{base_meta, drive, Kind, Step};
use super::inject::ErrorInjector;
use super::trace::{RunOptions, RunTrace};

fn check_start(mdp: &TabularMDP, m: usize, v0: &ValueFn) -> Result<()> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if v0.len() != mdp.n_states() {
        return Err(mismatch(mdp.n_states(), v0.len()));
    }
    Ok(())
}

/// `max_s (T* V - T^pi V)(s)`, the realized improvement error.
fn improvement_gap(q: &QFn, policy: &StochasticPolicy) -> f64 {
    (0..q.n_states())
        .map(|s| {
            let row = q.row(s);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let got: f64 = policy.row(s).iter().zip(row).map(|(p, x)| p * x).sum();
            best - got
        })
        .fold(0.0, f64::max)
}

/// Expected value of each state's Q row under `policy`, i.e. `T^pi V` when `q = Q_V`.
fn policy_average(q: &QFn, policy: &StochasticPolicy) -> Vec<f64> {
    (0..q.n_states())
        .map(|s| {
            policy
                .row(s)
                .iter()
                .zip(q.row(s))
                .filter(|(p, _)| **p != 0.0)
                .map(|(p, x)| p * x)
                .sum()
        })
        .collect()
}

/// Exact modified policy iteration.
pub fn run_mpi(mdp: &TabularMDP, m: usize, v0: &ValueFn, opts: &RunOptions) -> Result<RunTrace> {
    ampi_impl(mdp, m, v0, &ErrorInjector::zero(), opts, "mpi")
}

/// MPI with injected evaluation noise and perturbed-greedy improvement.
pub fn run_ampi(
    mdp: &TabularMDP,
    m: usize,
    v0: &ValueFn,
    injector: &ErrorInjector,
    opts: &RunOptions,
) -> Result<RunTrace> {
    injector.magnitude.validate()?;
    ampi_impl(mdp, m, v0, injector, opts, "ampi")
}

fn ampi_impl(
    mdp: &TabularMDP,
    m: usize,
    v0: &ValueFn,
    injector: &ErrorInjector,
    opts: &RunOptions,
    name: &str,
) -> Result<RunTrace> {
    check_start(mdp, m, v0)?;
    let mut meta = base_meta(name, v0.values());
    meta.m = Some(m);
    if name == "ampi" {
        meta.schedule = Some(injector.magnitude.to_string());
        meta.seed = Some(injector.seed);
    }
    let mut noise = injector.stream();
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    drive(mdp, Kind::Value, v0.values().to_vec(), opts, meta, |t, v| {
        let r = injector.magnitude.value(t);
        let q = mdp.q_from_v_raw(v);
        let policy = if injector.injects_improve() && r > 0.0 {
            let shift = noise.draw(n * k, r);
            let perturbed: Vec<f64> = q.values().iter().zip(&shift).map(|(a, b)| a + b).collect();
            QFn::new(n, k, perturbed)?.greedy_policy()
        } else {
            q.greedy_policy()
        };
        let impr_err = improvement_gap(&q, &policy);
        let mut next = policy_average(&q, &policy);
        for _ in 1..m {
            next = mdp.bellman_apply_raw(&policy, &next).into_inner();
        }
        let mut eval_err = 0.0;
        if injector.injects_eval() && r > 0.0 {
            for (x, e) in next.iter_mut().zip(noise.draw(n, r)) {
                *x += e;
                eval_err = f64::max(eval_err, e.abs());
            }
        }
        Ok(Step {
            iterate: next,
            policy,
            lambda: r,
            eval_err,
            impr_err,
        })
    })
}

/// Regularized MPI: Boltzmann improvement at temperature `lambda_N`, then `m` regularized evaluation steps.
pub fn run_reg_mpi(
    mdp: &TabularMDP,
    m: usize,
    v0: &ValueFn,
    sched: &Schedule,
    opts: &RunOptions,
) -> Result<RunTrace> {
    check_start(mdp, m, v0)?;
    sched.validate()?;
    let mut meta = base_meta("reg_mpi", v0.values());
    meta.m = Some(m);
    meta.schedule = Some(sched.to_string());
    drive(mdp, Kind::Value, v0.values().to_vec(), opts, meta, |t, v| {
        let lambda = sched.value(t);
        let reg = EntropyRegularizer::new(lambda)?;
        let q = mdp.q_from_v_raw(v);
        let policy = boltzmann_policy(mdp, &q, lambda);
        let impr_err = improvement_gap(&q, &policy);
        let pen = policy_penalty(mdp, &policy, &reg);
        let mut plain = policy_average(&q, &policy);
        let mut next: Vec<f64> = plain.iter().zip(&pen).map(|(x, p)| x - p).collect();
        let mut eval_err = pen.iter().fold(0.0, |a: f64, p| a.max(p.abs()));
        if m > 1 {
            for _ in 1..m {
                plain = mdp.bellman_apply_raw(&policy, &plain).into_inner();
                next = mdp
                    .bellman_apply_raw(&policy, &next)
                    .values()
                    .iter()
                    .zip(&pen)
                    .map(|(x, p)| x - p)
                    .collect();
            }
            eval_err = next
                .iter()
                .zip(&plain)
                .fold(0.0, |a: f64, (x, y)| a.max((x - y).abs()));
        }
        Ok(Step {
            iterate: next,
            policy,
            lambda,
            eval_err,
            impr_err,
        })
    })
}

/// `V_N(s) = lambda_N log sum_a exp(Q_{V_{N-1}}(s, a) / lambda_N)`.
pub fn run_soft_vi(
    mdp: &TabularMDP,
    v0: &ValueFn,
    sched: &Schedule,
    opts: &RunOptions,
) -> Result<RunTrace> {
    check_start(mdp, 1, v0)?;
    sched.validate()?;
    let mut meta = base_meta("soft_vi", v0.values());
    meta.m = Some(1);
    meta.schedule = Some(sched.to_string());
    drive(mdp, Kind::Value, v0.values().to_vec(), opts, meta, |t, v| {
        let lambda = sched.value(t);
        let reg = EntropyRegularizer::new(lambda)?;
        let q = mdp.q_from_v_raw(v);
        let next = state_smoothed_max(mdp, &q, lambda);
        let policy = boltzmann_policy(mdp, &q, lambda);
        let impr_err = improvement_gap(&q, &policy);
        let eval_err = policy_penalty(mdp, &policy, &reg)
            .iter()
            .fold(0.0, |a: f64, p| a.max(p.abs()));
        Ok(Step {
            iterate: next,
            policy,
            lambda,
            eval_err,
            impr_err,
        })
    })
}
