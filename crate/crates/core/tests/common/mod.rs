#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regdp_core::algorithms::RunTrace;
use regdp_core::mdp::random_mdp;
use regdp_core::TabularMDP;

/// Two states, two actions: `s0: a0 -> s0 (0), a1 -> s1 (1)`, `s1: a0 -> s1 (1), a1 -> s0 (0)`.
pub fn m2(gamma: f64) -> TabularMDP {
    TabularMDP::from_deterministic(&[vec![(0, 0.0), (1, 1.0)], vec![(1, 1.0), (0, 0.0)]], gamma)
        .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random MDP with 2..=6 states, 2..=4 actions and discount in [0.5, 0.95].
pub fn small_mdp(seed: u64) -> TabularMDP {
    use rand::Rng;
    let mut r = rng(seed);
    let n = r.gen_range(2..=6);
    let k = r.gen_range(2..=4);
    let gamma = r.gen_range(0.5..0.95);
    random_mdp(&mut r, n, k, gamma).unwrap()
}

/// Stored iterate of every iteration `1..=N` (V, or Q for Q-based schemes).
pub fn iterates(trace: &RunTrace) -> Vec<Vec<f64>> {
    (1..=trace.iterations())
        .map(|n| {
            let snap = trace.snapshot(n).expect("dense storage");
            match &snap.q {
                Some(q) => q.values().to_vec(),
                None => snap.values.clone(),
            }
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}

/// Largest per-iteration sup distance between two runs of equal length.
pub fn trace_distance(a: &RunTrace, b: &RunTrace) -> f64 {
    let (xa, xb) = (iterates(a), iterates(b));
    assert_eq!(xa.len(), xb.len());
    xa.iter().zip(&xb).fold(0.0, |m, (x, y)| m.max(max_abs_diff(x, y)))
}
