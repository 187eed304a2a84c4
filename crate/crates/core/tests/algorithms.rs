mod common;

use common::{iterates, m2, max_abs_diff, small_mdp, trace_distance};
use proptest::prelude::*;
use regdp_core::algorithms::{
    run_advantage_learning, run_ampi, run_cvi, run_mpi, run_reg_mpi, run_soft_vi, ErrorInjector,
    InjectMode, NoiseShape, Reference, RunOptions, StopReason, StopRule,
};
use regdp_core::cliff::{build_cliff, CliffConfig};
use regdp_core::{QFn, Schedule, ValueFn};

fn fixed(n: usize) -> RunOptions {
    RunOptions::new(StopRule::iterations(n))
}

fn sched(text: &str) -> Schedule {
    text.parse().unwrap()
}

#[test]
fn mpi_error_contracts_on_m2() {
    let mdp = m2(0.5);
    let trace = run_mpi(&mdp, 1, &ValueFn::zeros(2), &fixed(40)).unwrap();
    let mut prev = trace.meta.init_gap;
    for r in &trace.records {
        assert!(r.sup_err <= 0.5 * prev + 1e-15, "iteration {}", r.iter);
        prev = r.sup_err;
    }
}

#[test]
fn mpi_contracts_on_random_mdps() {
    for seed in 0..20 {
        let mdp = small_mdp(seed);
        let gamma = mdp.discount();
        let trace = run_mpi(&mdp, 1, &ValueFn::zeros(mdp.n_states()), &fixed(60)).unwrap();
        let mut prev = trace.meta.init_gap;
        for r in &trace.records {
            assert!(r.sup_err <= gamma * prev + 1e-10);
            prev = r.sup_err;
        }
    }
}

#[test]
fn large_m_behaves_as_policy_iteration_on_m2() {
    let mdp = m2(0.5);
    let trace = run_mpi(&mdp, 1000, &ValueFn::zeros(2), &fixed(3)).unwrap();
    let reference = Reference::solve(&mdp).unwrap();
    let optimal = reference.policy.modes();
    assert_eq!(optimal, vec![1, 0]);
    // the greedy policy of V_0 = 0 already picks the rewarding actions; after two steps it is optimal
    let second = trace.snapshot(2).unwrap();
    assert_eq!(second.policy.modes(), optimal);
    assert!(trace.records[1].sup_err < 1e-12);
}

#[test]
fn zero_injector_matches_mpi() {
    let mdp = small_mdp(3);
    let v0 = ValueFn::zeros(mdp.n_states());
    let a = run_mpi(&mdp, 3, &v0, &fixed(30)).unwrap();
    let b = run_ampi(&mdp, 3, &v0, &ErrorInjector::zero(), &fixed(30)).unwrap();
    assert_eq!(iterates(&a), iterates(&b));
    assert_eq!(a.sup_errs(), b.sup_errs());
}

#[test]
fn ampi_improvement_error_is_at_most_twice_the_noise() {
    let mdp = build_cliff(&CliffConfig::with_wind(0.15)).unwrap();
    let inj = ErrorInjector::new(sched("geo:5:0.95"), InjectMode::Both, NoiseShape::SignedUniform, 11);
    let trace = run_ampi(&mdp, 2, &ValueFn::zeros(mdp.n_states()), &inj, &fixed(200)).unwrap();
    let mut hit = false;
    for r in &trace.records {
        assert!(r.impr_err <= 2.0 * r.lambda + 1e-12, "iteration {}", r.iter);
        assert!(r.eval_err <= r.lambda);
        hit |= r.impr_err > 0.0;
    }
    assert!(hit, "noise never changed the greedy choice");
}

#[test]
fn ampi_is_deterministic_given_the_seed() {
    let mdp = small_mdp(5);
    let v0 = ValueFn::zeros(mdp.n_states());
    let inj = ErrorInjector::new(sched("invpoly:1:1"), InjectMode::Both, NoiseShape::SignedUniform, 42);
    let a = run_ampi(&mdp, 2, &v0, &inj, &fixed(100)).unwrap();
    let b = run_ampi(&mdp, 2, &v0, &inj, &fixed(100)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    let other = ErrorInjector { seed: 43, ..inj };
    let c = run_ampi(&mdp, 2, &v0, &other, &fixed(100)).unwrap();
    assert_ne!(iterates(&a), iterates(&c));
}

#[test]
fn regularized_realized_errors_respect_temperature_bounds() {
    for seed in 0..10 {
        let mdp = small_mdp(100 + seed);
        let gamma = mdp.discount();
        let log_a = (mdp.n_actions() as f64).ln();
        let v0 = ValueFn::zeros(mdp.n_states());
        for m in [1, 2, 5] {
            let trace = run_reg_mpi(&mdp, m, &v0, &sched("geo:2:0.9"), &fixed(50)).unwrap();
            let factor = (1.0 - gamma.powi(m as i32)) / (1.0 - gamma);
            for r in &trace.records {
                assert!(r.eval_err <= factor * r.lambda * log_a + 1e-12);
                assert!(r.impr_err <= r.lambda * log_a + 1e-12);
            }
        }
    }
}

#[test]
fn cvi_realized_error_is_bounded_by_the_temperature() {
    for seed in 0..10 {
        let mdp = small_mdp(200 + seed);
        let log_a = (mdp.n_actions() as f64).ln();
        let q0 = QFn::zeros(mdp.n_states(), mdp.n_actions());
        for alpha in [0.0, 0.6, 0.95] {
            let trace = run_cvi(&mdp, &q0, &sched("geo:2:0.8"), alpha, &fixed(50)).unwrap();
            let rate = alpha.max(mdp.discount());
            for r in &trace.records {
                assert!(r.eval_err <= rate * r.lambda * log_a + 1e-12);
            }
        }
    }
}

#[test]
fn fixed_temperature_leaves_an_error_floor() {
    let mdp = build_cliff(&CliffConfig::default()).unwrap();
    let v0 = ValueFn::zeros(mdp.n_states());
    let trace = run_soft_vi(&mdp, &v0, &sched("const:0.01"), &fixed(2000)).unwrap();
    let errs = trace.sup_errs();
    let tail = &errs[1500..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(0.0, f64::max);
    assert!(lo > 1e-4, "floor {lo}");
    assert!((hi - lo) / lo < 1e-6, "not a plateau: {lo}..{hi}");
    let annealed = run_soft_vi(&mdp, &v0, &sched("geo:1:0.45"), &fixed(2000)).unwrap();
    assert!(annealed.final_error() < 1e-12);
}

#[test]
fn advantage_learning_increases_action_gaps() {
    let mdp = build_cliff(&CliffConfig::default()).unwrap();
    let q0 = QFn::zeros(mdp.n_states(), mdp.n_actions());
    let zero = ErrorInjector::zero();
    let plain = run_advantage_learning(&mdp, &q0, 0.0, &zero, &fixed(100)).unwrap();
    let gapped = run_advantage_learning(&mdp, &q0, 0.6, &zero, &fixed(100)).unwrap();
    let k = mdp.n_actions();
    for (a, b) in iterates(&plain).iter().zip(&iterates(&gapped)) {
        for s in 0..mdp.n_states() {
            let (ra, rb) = (&a[s * k..s * k + k], &b[s * k..s * k + k]);
            let (ma, mb) = (ra.iter().copied().fold(f64::MIN, f64::max), rb.iter().copied().fold(f64::MIN, f64::max));
            for x in 0..k {
                assert!(mb - rb[x] >= ma - ra[x] - 1e-9);
            }
        }
    }
}

#[test]
fn advantage_learning_with_unit_alpha_decays_like_one_over_n() {
    let mdp = m2(0.9);
    // start on the wrong actions so the greedy policy is suboptimal for a while
    let q0 = QFn::new(2, 2, vec![5.0, 0.0, 0.0, 5.0]).unwrap();
    let trace = run_advantage_learning(&mdp, &q0, 1.0, &ErrorInjector::zero(), &fixed(5000)).unwrap();
    // regret below 1e-12 is the rounding of the exact solves
    let regret: Vec<f64> = trace.sup_errs().iter().map(|&e| if e < 1e-12 { 0.0 } else { e }).collect();
    assert!(regret[0] > 1.0);
    let scaled: Vec<f64> = regret.iter().enumerate().map(|(i, e)| (i + 1) as f64 * e).collect();
    let early = scaled[..500].iter().copied().fold(0.0, f64::max);
    let late = scaled[500..].iter().copied().fold(0.0, f64::max);
    assert!(late <= early);
    assert_eq!(*regret.last().unwrap(), 0.0);
}

#[test]
fn cap_is_reported() {
    let mdp = m2(0.9);
    let trace = run_mpi(&mdp, 1, &ValueFn::zeros(2), &RunOptions::new(StopRule::eps(1e-14, 5))).unwrap();
    assert_eq!(trace.reason, StopReason::CapReached);
    assert_eq!(trace.converged_at(), None);
}

#[test]
fn soft_vi_converged_policy_is_optimal_on_the_cliff() {
    let mdp = build_cliff(&CliffConfig::with_wind(0.15)).unwrap();
    let reference = Reference::solve(&mdp).unwrap();
    let trace = run_soft_vi(&mdp, &ValueFn::zeros(mdp.n_states()), &sched("geo:1:0.9"), &RunOptions::default()).unwrap();
    assert_eq!(trace.reason, StopReason::Converged);
    assert_eq!(trace.final_snapshot.greedy, reference.policy.modes());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn soft_vi_is_reg_mpi_with_one_step(seed in 0u64..10_000) {
        let mdp = small_mdp(seed);
        let v0 = ValueFn::zeros(mdp.n_states());
        let s = sched("invpoly:2:1");
        let a = run_soft_vi(&mdp, &v0, &s, &fixed(40)).unwrap();
        let b = run_reg_mpi(&mdp, 1, &v0, &s, &fixed(40)).unwrap();
        prop_assert!(trace_distance(&a, &b) <= 1e-12);
    }

    #[test]
    fn reg_mpi_without_temperature_is_mpi(seed in 0u64..10_000, m in 1usize..6) {
        let mdp = small_mdp(seed);
        let v0 = ValueFn::zeros(mdp.n_states());
        let a = run_reg_mpi(&mdp, m, &v0, &Schedule::Zero, &fixed(40)).unwrap();
        let b = run_mpi(&mdp, m, &v0, &fixed(40)).unwrap();
        prop_assert!(trace_distance(&a, &b) <= 1e-12);
    }

    #[test]
    fn q_schemes_without_gap_or_temperature_are_value_iteration(seed in 0u64..10_000) {
        let mdp = small_mdp(seed);
        let (n, k) = (mdp.n_states(), mdp.n_actions());
        let vi = run_mpi(&mdp, 1, &ValueFn::zeros(n), &fixed(40)).unwrap();
        let q0 = QFn::zeros(n, k);
        let cvi = run_cvi(&mdp, &q0, &Schedule::Zero, 0.0, &fixed(41)).unwrap();
        let al = run_advantage_learning(&mdp, &q0, 0.0, &ErrorInjector::zero(), &fixed(41)).unwrap();
        let v = iterates(&vi);
        let (qc, qa) = (iterates(&cvi), iterates(&al));
        // Q_{N+1} = Q_{V_N}
        for (i, vn) in v.iter().enumerate() {
            let expected = mdp.q_from_v(&ValueFn::new(vn.clone())).unwrap();
            prop_assert!(max_abs_diff(&qc[i + 1], expected.values()) <= 1e-12);
            prop_assert!(max_abs_diff(&qa[i + 1], expected.values()) <= 1e-12);
        }
    }

    #[test]
    fn runs_are_reproducible(seed in 0u64..10_000, alpha in 0.0f64..1.0) {
        let mdp = small_mdp(seed);
        let q0 = QFn::zeros(mdp.n_states(), mdp.n_actions());
        let a = run_cvi(&mdp, &q0, &sched("geo:1:0.8"), alpha, &fixed(30)).unwrap();
        let b = run_cvi(&mdp, &q0, &sched("geo:1:0.8"), alpha, &fixed(30)).unwrap();
        prop_assert_eq!(a, b);
    }
}
