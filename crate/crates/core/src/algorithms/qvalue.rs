use crate::error::{Error, Result};
use crate::mdp::{QFn, TabularMDP};
use crate::regularize::{boltzmann_policy, state_smoothed_max};
use crate::schedule::Schedule;

use super::driver::{base_meta, drive, Kind, Step};
use super::inject::ErrorInjector;
use super::trace::{RunOptions, RunTrace};

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// `r + gamma P v + alpha (Q - v)` with `v` a per-state baseline.
fn gap_increasing_update(mdp: &TabularMDP, q: &QFn, baseline: &[f64], alpha: f64) -> Vec<f64> {
    let tq = mdp.q_from_v_raw(baseline);
    let k = q.n_actions();
    tq.values()
        .iter()
        .zip(q.values())
        .enumerate()
        .map(|(i, (t, x))| t + alpha * (x - baseline[i / k]))
        .collect()
}

/// Approximate advantage learning: `Q_N = T* Q_{N-1} + alpha (Q_{N-1} - max Q_{N-1}) + eps_N`.
pub fn run_advantage_learning(
    mdp: &TabularMDP,
    q0: &QFn,
    alpha: f64,
    injector: &ErrorInjector,
    opts: &RunOptions,
) -> Result<RunTrace> {
    check_alpha(alpha)?;
    mdp.check_q(q0)?;
    injector.magnitude.validate()?;
    let mut meta = base_meta("al", q0.values());
    meta.alpha = Some(alpha);
    meta.schedule = Some(injector.magnitude.to_string());
    meta.seed = Some(injector.seed);
    let mut noise = injector.stream();
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    drive(mdp, Kind::Q, q0.values().to_vec(), opts, meta, |t, x| {
        let q = QFn::new(n, k, x.to_vec())?;
        let hard = q.max_values();
        let mut next = gap_increasing_update(mdp, &q, hard.values(), alpha);
        let r = injector.magnitude.value(t);
        let mut eval_err = 0.0;
        if r > 0.0 {
            for (y, e) in next.iter_mut().zip(noise.draw(n * k, r)) {
                *y += e;
                eval_err = f64::max(eval_err, e.abs());
            }
        }
        let policy = QFn::new(n, k, next.clone())?.greedy_policy();
        Ok(Step {
            iterate: next,
            policy,
            lambda: r,
            eval_err,
            impr_err: 0.0,
        })
    })
}

/// Conservative value iteration with entropy temperature `lambda_N` and gap-increasing factor `alpha`.
pub fn run_cvi(
    mdp: &TabularMDP,
    q0: &QFn,
    sched: &Schedule,
    alpha: f64,
    opts: &RunOptions,
) -> Result<RunTrace> {
    check_alpha(alpha)?;
    mdp.check_q(q0)?;
    sched.validate()?;
    let mut meta = base_meta("cvi", q0.values());
    meta.alpha = Some(alpha);
    meta.schedule = Some(sched.to_string());
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    drive(mdp, Kind::Q, q0.values().to_vec(), opts, meta, |t, x| {
        let lambda = sched.value(t);
        let q = QFn::new(n, k, x.to_vec())?;
        let soft = state_smoothed_max(mdp, &q, lambda);
        let next = gap_increasing_update(mdp, &q, &soft, alpha);
        // realized error against the unregularized advantage-learning update
        let hard = q.max_values();
        let al = gap_increasing_update(mdp, &q, hard.values(), alpha);
        let eval_err = next
            .iter()
            .zip(&al)
            .fold(0.0, |a: f64, (x, y)| a.max((x - y).abs()));
        let policy = boltzmann_policy(mdp, &QFn::new(n, k, next.clone())?, lambda);
        Ok(Step {
            iterate: next,
            policy,
            lambda,
            eval_err,
            impr_err: 0.0,
        })
    })
}
