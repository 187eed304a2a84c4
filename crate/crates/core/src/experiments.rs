//! Iteration-count tables, constant calibration and figure data on the cliff domain.
//!
//! Cells are independent runs over a shared read-only MDP. With the `parallel` feature
//! they are mapped on the rayon pool; results keep the input order either way.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    policy_snapshot, run_cvi, run_mpi, run_soft_vi, RunOptions, RunTrace, StopRule, Storage,
};
use crate::bounds::{
    cvi_bound_curve, fit_envelope, rate_envelope, reg_mpi_bound_curve, CviVariant, TempScale,
};
use crate::cliff::{build_cliff, CliffConfig, TerminalHandling};
use crate::error::Result;
use crate::mdp::{QFn, TabularMDP, ValueFn, HARD_ITERATION_CAP};
use crate::schedule::{classify_regime, Regime, RegimeColor, Schedule};

pub const TABLE1_WINDS: [f64; 3] = [0.0, 0.15, 0.3];

/// Reference counts, rows `0, (gamma/2)^N, gamma^N, 1/N, 1/sqrt(N)`, columns by wind.
pub const TABLE1_REFERENCE: [[usize; 3]; 5] = [
    [18, 24, 31],
    [29, 27, 32],
    [166, 55, 54],
    [15_691, 136, 93],
    [247_394, 6379, 3440],
];

pub const TABLE2_ALPHAS: [f64; 3] = [0.0, 0.6, 0.95];

/// Reference counts, rows `0.45^N, 0.8^N, gamma^N, 1/N^2`, columns by alpha.
pub const TABLE2_REFERENCE: [[usize; 3]; 4] = [
    [167, 156, 399],
    [179, 168, 399],
    [208, 197, 399],
    [1367, 1058, 907],
];

/// Reference colours of the CVI table.
pub const TABLE2_COLORS: [[RegimeColor; 3]; 4] = [
    [RegimeColor::Red, RegimeColor::Red, RegimeColor::Blue],
    [RegimeColor::Red, RegimeColor::Red, RegimeColor::Blue],
    [RegimeColor::Red, RegimeColor::Red, RegimeColor::Blue],
    [RegimeColor::Green, RegimeColor::Green, RegimeColor::Green],
];

/// Maps independent cells, on the rayon pool when the `parallel` feature is on.
pub fn map_cells<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_cells_parallel(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_cells_sequential(items, f)
    }
}

pub fn map_cells_sequential<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_cells_parallel<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

/// The schedule rows of the soft-VI table, with display labels.
pub fn table1_schedules(gamma: f64) -> Vec<(&'static str, Schedule)> {
    vec![
        ("0", Schedule::Zero),
        ("(gamma/2)^N", Schedule::Geometric { c: 1.0, q: gamma / 2.0 }),
        ("gamma^N", Schedule::Geometric { c: 1.0, q: gamma }),
        ("1/N", Schedule::InversePoly { c: 1.0, k: 1.0 }),
        ("1/sqrt(N)", Schedule::InversePoly { c: 1.0, k: 0.5 }),
    ]
}

/// The schedule rows of the CVI table.
pub fn table2_schedules(gamma: f64) -> Vec<(&'static str, Schedule)> {
    vec![
        ("0.45^N", Schedule::Geometric { c: 1.0, q: 0.45 }),
        ("0.8^N", Schedule::Geometric { c: 1.0, q: 0.8 }),
        ("gamma^N", Schedule::Geometric { c: 1.0, q: gamma }),
        ("1/N^2", Schedule::InversePoly { c: 1.0, k: 2.0 }),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub label: String,
    pub schedule: String,
    pub wind_prob: f64,
    pub alpha: Option<f64>,
    /// `None` when the iteration cap was reached first.
    pub iterations: Option<usize>,
    pub reference: usize,
    pub regime: Option<Regime>,
}

impl TableCell {
    /// `(iterations - reference) / reference`.
    pub fn rel_diff(&self) -> Option<f64> {
        self.iterations
            .map(|n| (n as f64 - self.reference as f64) / self.reference as f64)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.rel_diff().is_some_and(|d| d.abs() <= tol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub title: String,
    pub cells: Vec<TableCell>,
}

impl TableReport {
    /// CSV with header `schedule,wind_prob,alpha,iterations,reference,rel_diff,regime,color`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("schedule,wind_prob,alpha,iterations,reference,rel_diff,regime,color\n");
        for c in &self.cells {
            let iters = c.iterations.map_or("cap-exceeded".to_string(), |n| n.to_string());
            let diff = c.rel_diff().map_or(String::new(), |d| format!("{d:.4}"));
            let alpha = c.alpha.map_or(String::new(), |a| a.to_string());
            let (regime, color) = c.regime.as_ref().map_or((String::new(), String::new()), |r| {
                (r.describe(), format!("{:?}", r.color()).to_lowercase())
            });
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.label, c.wind_prob, alpha, iters, c.reference, diff, regime, color
            );
        }
        out
    }

    /// One line per cell outside `tol`, empty when all cells match.
    pub fn diff_report(&self, tol: f64) -> String {
        let mut out = String::new();
        for c in self.cells.iter().filter(|c| !c.within(tol)) {
            let got = c.iterations.map_or("cap-exceeded".to_string(), |n| n.to_string());
            let _ = writeln!(
                out,
                "{} {}: {} (p={}{}) vs reference {} ({})",
                self.title,
                c.label,
                got,
                c.wind_prob,
                c.alpha.map_or(String::new(), |a| format!(", alpha={a}")),
                c.reference,
                c.rel_diff().map_or("n/a".into(), |d| format!("{:+.1}%", 100.0 * d)),
            );
        }
        out
    }

    pub fn cell(&self, label: &str, wind_prob: f64, alpha: Option<f64>) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| c.label == label && c.wind_prob == wind_prob && c.alpha == alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub eps: f64,
    pub max_iters: usize,
    /// Environment template; the wind probability is set per cell.
    pub cliff: CliffConfig,
    /// Multiplies every schedule constant.
    pub scale: f64,
}

impl TableConfig {
    pub fn table1() -> Self {
        Self {
            eps: 1e-8,
            max_iters: HARD_ITERATION_CAP,
            cliff: CliffConfig::default(),
            scale: 1.0,
        }
    }

    pub fn table2() -> Self {
        Self {
            cliff: CliffConfig {
                terminal_handling: TerminalHandling::Absorbing,
                ..CliffConfig::default()
            },
            ..Self::table1()
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            stop: StopRule::eps(self.eps, self.max_iters),
            storage: Storage::FinalOnly,
        }
    }

    fn build(&self, wind_prob: f64) -> Result<TabularMDP> {
        build_cliff(&CliffConfig {
            wind_prob,
            ..self.cliff
        })
    }
}

/// Iterations of soft VI (exact VI for the zero schedule) to reach `eps`.
pub fn soft_vi_iterations(mdp: &TabularMDP, sched: &Schedule, opts: &RunOptions) -> Result<Option<usize>> {
    let v0 = ValueFn::zeros(mdp.n_states());
    let trace = if sched.is_zero() {
        run_mpi(mdp, 1, &v0, opts)?
    } else {
        run_soft_vi(mdp, &v0, sched, opts)?
    };
    Ok(trace.converged_at())
}

/// Soft-VI iteration counts for every schedule and wind probability.
pub fn table1(cfg: &TableConfig) -> Result<TableReport> {
    let gamma = cfg.cliff.discount;
    let mdps: Vec<TabularMDP> = TABLE1_WINDS.iter().map(|&p| cfg.build(p)).collect::<Result<_>>()?;
    let scheds = table1_schedules(gamma);
    let mut jobs = Vec::new();
    for (row, (label, sched)) in scheds.iter().enumerate() {
        for (col, &p) in TABLE1_WINDS.iter().enumerate() {
            jobs.push((row, col, *label, sched.scaled(cfg.scale), p));
        }
    }
    let opts = cfg.options();
    let cells = map_cells(jobs, |(row, col, label, sched, p)| -> Result<TableCell> {
        let iterations = soft_vi_iterations(&mdps[col], &sched, &opts)?;
        Ok(TableCell {
            label: label.to_string(),
            schedule: sched.to_string(),
            wind_prob: p,
            alpha: None,
            iterations,
            reference: TABLE1_REFERENCE[row][col],
            regime: Some(classify_regime(&sched, gamma, None)?),
        })
    });
    Ok(TableReport {
        title: "soft-vi".into(),
        cells: cells.into_iter().collect::<Result<_>>()?,
    })
}

/// CVI iteration counts for every schedule and gap-increasing factor on the windless cliff.
pub fn table2(cfg: &TableConfig) -> Result<TableReport> {
    let gamma = cfg.cliff.discount;
    let mdp = cfg.build(0.0)?;
    let mut jobs = Vec::new();
    for (row, (label, sched)) in table2_schedules(gamma).into_iter().enumerate() {
        for (col, &alpha) in TABLE2_ALPHAS.iter().enumerate() {
            jobs.push((row, col, label, sched.scaled(cfg.scale), alpha));
        }
    }
    let opts = cfg.options();
    let q0 = QFn::zeros(mdp.n_states(), mdp.n_actions());
    let cells = map_cells(jobs, |(row, col, label, sched, alpha)| -> Result<TableCell> {
        let trace = run_cvi(&mdp, &q0, &sched, alpha, &opts)?;
        Ok(TableCell {
            label: label.to_string(),
            schedule: sched.to_string(),
            wind_prob: 0.0,
            alpha: Some(alpha),
            iterations: trace.converged_at(),
            reference: TABLE2_REFERENCE[row][col],
            regime: Some(classify_regime(&sched, gamma, Some(alpha))?),
        })
    });
    Ok(TableReport {
        title: "cvi".into(),
        cells: cells.into_iter().collect::<Result<_>>()?,
    })
}

/// Best schedule constant for one row of the soft-VI table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub label: String,
    pub constant: f64,
    pub iterations: Vec<Option<usize>>,
    pub reference: Vec<usize>,
    /// Largest relative deviation over the row at the best constant.
    pub worst_rel_diff: f64,
}

impl Calibration {
    pub fn within(&self, tol: f64) -> bool {
        self.worst_rel_diff <= tol
    }
}

/// Constants `2^(k/4)` for `k = -8..=8`, spanning `[0.25, 4]`.
pub fn calibration_grid() -> Vec<f64> {
    (-8..=8).map(|k| 2f64.powf(k as f64 / 4.0)).collect()
}

/// Sweeps the schedule constant per soft-VI row and keeps the one with the smallest worst-case deviation.
pub fn calibrate_table1(cfg: &TableConfig, grid: &[f64]) -> Result<Vec<Calibration>> {
    let labels: Vec<&str> = table1_schedules(cfg.cliff.discount).iter().map(|(l, _)| *l).collect();
    calibrate_rows(cfg, grid, &labels)
}

/// As [`calibrate_table1`], restricted to the rows with the given labels.
pub fn calibrate_rows(cfg: &TableConfig, grid: &[f64], labels: &[&str]) -> Result<Vec<Calibration>> {
    let gamma = cfg.cliff.discount;
    let mdps: Vec<TabularMDP> = TABLE1_WINDS.iter().map(|&p| cfg.build(p)).collect::<Result<_>>()?;
    let opts = cfg.options();
    let rows: Vec<(usize, &str, Schedule)> = table1_schedules(gamma)
        .into_iter()
        .enumerate()
        .filter(|(_, (l, s))| !s.is_zero() && labels.contains(l))
        .map(|(i, (l, s))| (i, l, s))
        .collect();
    let mut jobs = Vec::new();
    for (r, _, sched) in &rows {
        for (gi, &c) in grid.iter().enumerate() {
            for (col, _) in TABLE1_WINDS.iter().enumerate() {
                jobs.push((*r, gi, col, sched.scaled(c)));
            }
        }
    }
    let counts = map_cells(jobs, |(r, gi, col, sched)| {
        soft_vi_iterations(&mdps[col], &sched, &opts).map(|n| (r, gi, col, n))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::new();
    for (r, label, _) in rows {
        let reference = TABLE1_REFERENCE[r].to_vec();
        let mut best: Option<Calibration> = None;
        for (gi, &c) in grid.iter().enumerate() {
            let iterations: Vec<Option<usize>> = (0..TABLE1_WINDS.len())
                .map(|col| {
                    counts
                        .iter()
                        .find(|(rr, g, cc, _)| *rr == r && *g == gi && *cc == col)
                        .and_then(|(.., n)| *n)
                })
                .collect();
            let worst = iterations
                .iter()
                .zip(&reference)
                .map(|(n, &p)| n.map_or(f64::INFINITY, |n| (n as f64 - p as f64).abs() / p as f64))
                .fold(0.0, f64::max);
            if best.as_ref().is_none_or(|b| worst < b.worst_rel_diff) {
                best = Some(Calibration {
                    label: label.to_string(),
                    constant: c,
                    iterations,
                    reference: reference.clone(),
                    worst_rel_diff: worst,
                });
            }
        }
        out.extend(best);
    }
    Ok(out)
}

pub fn calibration_csv(rows: &[Calibration]) -> String {
    let mut out = String::from("schedule,constant,iterations,reference,worst_rel_diff\n");
    for c in rows {
        let iters: Vec<String> = c
            .iterations
            .iter()
            .map(|n| n.map_or("cap-exceeded".into(), |n| n.to_string()))
            .collect();
        let refs: Vec<String> = c.reference.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{:.4},{},{},{:.4}",
            c.label,
            c.constant,
            iters.join(";"),
            refs.join(";"),
            c.worst_rel_diff
        );
    }
    out
}

/// One point of an error-versus-bound curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub series: String,
    pub n: usize,
    pub empirical: f64,
    pub bound: Option<f64>,
    pub envelope: Option<f64>,
}

/// Long-format CSV with header `series,N,empirical,bound,envelope`.
pub fn curves_csv(points: &[CurvePoint]) -> String {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:e}"));
    let mut out = String::from("series,N,empirical,bound,envelope\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{}",
            p.series,
            p.n,
            p.empirical,
            opt(p.bound),
            opt(p.envelope)
        );
    }
    out
}

fn soft_vi_trace(mdp: &TabularMDP, sched: &Schedule, n_iters: usize) -> Result<RunTrace> {
    let opts = RunOptions {
        stop: StopRule::iterations(n_iters),
        storage: Storage::FinalOnly,
    };
    run_soft_vi(mdp, &ValueFn::zeros(mdp.n_states()), sched, &opts)
}

/// Soft-VI error with the regularized-MPI bound and a fitted rate envelope, per schedule.
pub fn value_bound_curves(
    mdp: &TabularMDP,
    scheds: &[(String, Schedule)],
    n_iters: usize,
    scale: TempScale,
) -> Result<Vec<CurvePoint>> {
    let gamma = mdp.discount();
    let per_sched = map_cells(scheds.to_vec(), |(label, sched)| -> Result<Vec<CurvePoint>> {
        let trace = soft_vi_trace(mdp, &sched, n_iters)?;
        let errs = trace.sup_errs();
        let bound = reg_mpi_bound_curve(&sched, gamma, 1, trace.meta.init_gap, errs.len(), scale)?;
        let regime = classify_regime(&sched, gamma, None)?;
        let fit = fit_envelope(&regime, &sched, &errs).ok();
        (1..=errs.len())
            .map(|n| {
                let envelope = match &fit {
                    Some(f) => Some(rate_envelope(&regime, n, f.constant, &sched)?),
                    None => None,
                };
                Ok(CurvePoint {
                    series: label.clone(),
                    n,
                    empirical: errs[n - 1],
                    bound: bound.at(n),
                    envelope,
                })
            })
            .collect()
    });
    Ok(per_sched
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect())
}

/// Soft-VI error curves without bounds.
pub fn value_error_curves(
    mdp: &TabularMDP,
    scheds: &[(String, Schedule)],
    n_iters: usize,
) -> Result<Vec<CurvePoint>> {
    let per_sched = map_cells(scheds.to_vec(), |(label, sched)| -> Result<Vec<CurvePoint>> {
        let trace = soft_vi_trace(mdp, &sched, n_iters)?;
        Ok(trace
            .records
            .iter()
            .map(|r| CurvePoint {
                series: label.clone(),
                n: r.iter,
                empirical: r.sup_err,
                bound: None,
                envelope: None,
            })
            .collect())
    });
    Ok(per_sched
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect())
}

/// CVI regret with its schedule bound, per `(schedule, alpha)`.
pub fn cvi_bound_curves(
    mdp: &TabularMDP,
    cells: &[(String, Schedule, f64)],
    n_iters: usize,
    variant: CviVariant,
    scale: TempScale,
) -> Result<Vec<CurvePoint>> {
    let gamma = mdp.discount();
    let q0 = QFn::zeros(mdp.n_states(), mdp.n_actions());
    let per_cell = map_cells(cells.to_vec(), |(label, sched, alpha)| -> Result<Vec<CurvePoint>> {
        let opts = RunOptions {
            stop: StopRule::iterations(n_iters),
            storage: Storage::FinalOnly,
        };
        let trace = run_cvi(mdp, &q0, &sched, alpha, &opts)?;
        let bound = cvi_bound_curve(&sched, gamma, alpha, mdp.v_max(), n_iters, variant, scale)?;
        Ok(trace
            .records
            .iter()
            .map(|r| CurvePoint {
                series: format!("{label} alpha={alpha}"),
                n: r.iter,
                empirical: r.sup_err,
                bound: bound.at(r.iter),
                envelope: None,
            })
            .collect())
    });
    Ok(per_cell
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect())
}

/// Value and greedy action per cell at the requested iterations, for exact VI and soft VI.
pub fn snapshot_series(
    mdp: &TabularMDP,
    sched: &Schedule,
    iters: &[usize],
) -> Result<String> {
    let n_max = iters.iter().copied().max().unwrap_or(1);
    let opts = RunOptions::new(StopRule::iterations(n_max));
    let v0 = ValueFn::zeros(mdp.n_states());
    let runs = [
        ("exact_vi", run_mpi(mdp, 1, &v0, &opts)?),
        ("soft_vi", run_soft_vi(mdp, &v0, sched, &opts)?),
    ];
    let mut out = String::from("algorithm,iter,col,row,value,best_action\n");
    for (name, trace) in &runs {
        for &n in iters {
            let snap = policy_snapshot(trace, n)?;
            for line in snap.to_csv().lines().skip(1) {
                let _ = writeln!(out, "{name},{n},{line}");
            }
        }
    }
    Ok(out)
}
