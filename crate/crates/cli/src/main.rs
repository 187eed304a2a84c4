mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use regdp_core::algorithms::{
    run_advantage_learning, run_ampi, run_cvi, run_mpi, run_reg_mpi, run_soft_vi, ErrorInjector,
    RunOptions, RunTrace, StopReason,
};
use regdp_core::bounds::{
    al_realized_bound_curve, ampi_bound_curve, cvi_bound_curve, reg_mpi_bound_curve,
};
use regdp_core::experiments::{
    calibrate_table1, calibration_csv, calibration_grid, curves_csv, cvi_bound_curves,
    snapshot_series, table1, table2, value_bound_curves, value_error_curves, TableConfig,
};
use regdp_core::{QFn, TabularMDP, ValueFn};

use config::{max_iters_override, Algorithm, FigureConfig, FigureKind, RunConfig};

#[derive(Parser)]
#[command(name = "regdp", version, about = "Regularized dynamic programming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm from a JSON config and write its trace CSV.
    Run {
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Soft-VI iteration counts on the cliff for five schedules and three wind probabilities.
    Table1 {
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also sweep the schedule constant over [0.25, 4] per row.
        #[arg(long)]
        calibrate: bool,
        /// Multiplies every schedule constant.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Relative tolerance of the diff report.
        #[arg(long, default_value_t = 0.25)]
        tol: f64,
    },
    /// CVI iteration counts on the cliff for four schedules and three gap-increasing factors.
    Table2 {
        #[arg(long, default_value_t = 1e-8)]
        eps: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.25)]
        tol: f64,
    },
    /// Error-versus-bound curves or snapshot series from a JSON config.
    Figure {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Config(anyhow::Error),
    CapReached(String),
    Runtime(anyhow::Error),
}

impl Failure {
    fn config(e: impl Into<anyhow::Error>) -> Self {
        Failure::Config(e.into())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<regdp_core::Error> for Failure {
    fn from(e: regdp_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Table1 {
            eps,
            out,
            calibrate,
            scale,
            tol,
        } => cmd_table1(eps, out, calibrate, scale, tol),
        Command::Table2 { eps, out, scale, tol } => cmd_table2(eps, out, scale, tol),
        Command::Figure { config, out } => cmd_figure(&config, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::CapReached(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::config)?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::config)
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::Runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(cfg: &RunConfig, mdp: &TabularMDP) -> regdp_core::Result<RunTrace> {
    let opts = RunOptions::new(cfg.stop.rule().expect("validated"));
    let (n, k) = (mdp.n_states(), mdp.n_actions());
    let v0 = ValueFn::zeros(n);
    let q0 = QFn::zeros(n, k);
    let m = cfg.m.unwrap_or(1);
    let zero = ErrorInjector::zero();
    let injector = cfg.injector.as_ref().unwrap_or(&zero);
    let sched = cfg.schedule.as_ref();
    let alpha = cfg.alpha.unwrap_or(0.0);
    let mut trace = match cfg.algorithm {
        Algorithm::Mpi => run_mpi(mdp, m, &v0, &opts)?,
        Algorithm::Ampi => run_ampi(mdp, m, &v0, injector, &opts)?,
        Algorithm::RegMpi => run_reg_mpi(mdp, m, &v0, sched.expect("validated"), &opts)?,
        Algorithm::SoftVi => run_soft_vi(mdp, &v0, sched.expect("validated"), &opts)?,
        Algorithm::Al => run_advantage_learning(mdp, &q0, alpha, injector, &opts)?,
        Algorithm::Cvi => run_cvi(mdp, &q0, sched.expect("validated"), alpha, &opts)?,
    };
    let gamma = mdp.discount();
    let len = trace.records.len();
    let scale = cfg.bounds.scale(k);
    let curve = match cfg.algorithm {
        Algorithm::Mpi | Algorithm::Ampi => ampi_bound_curve(
            &trace.eval_errs(),
            &trace.impr_errs(),
            gamma,
            trace.meta.init_gap,
        )?,
        Algorithm::RegMpi | Algorithm::SoftVi => reg_mpi_bound_curve(
            sched.expect("validated"),
            gamma,
            m,
            trace.meta.init_gap,
            len,
            scale,
        )?,
        Algorithm::Al => al_realized_bound_curve(&trace.eval_errs(), gamma, alpha, mdp.v_max())?,
        Algorithm::Cvi => cvi_bound_curve(
            sched.expect("validated"),
            gamma,
            alpha,
            mdp.v_max(),
            len,
            cfg.bounds.cvi_variant,
            scale,
        )?,
    };
    trace.attach_bounds(&curve.values);
    Ok(trace)
}

fn cmd_run(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg: RunConfig = read_json(path)?;
    cfg.validate().map_err(Failure::Config)?;
    let mdp = cfg.env.build(&config_dir(path)).map_err(Failure::Config)?;
    let trace = execute(&cfg, &mdp)?;
    let out = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| path.with_extension("trace.csv"));
    emit(Some(&out), &trace.to_csv())?;
    println!("algorithm={}", trace.meta.algorithm);
    println!("iterations={}", trace.iterations());
    println!("final_error={:e}", trace.final_error());
    println!("trace={}", out.display());
    if trace.reason == StopReason::CapReached {
        return Err(Failure::CapReached(format!(
            "iteration cap of {} reached before eps",
            trace.iterations()
        )));
    }
    Ok(())
}

fn table_config(mut base: TableConfig, eps: f64, scale: f64) -> Result<TableConfig, Failure> {
    if !(eps > 0.0) {
        return Err(Failure::config(anyhow::anyhow!("eps must be positive")));
    }
    if !(scale > 0.0) {
        return Err(Failure::config(anyhow::anyhow!("scale must be positive")));
    }
    base.eps = eps;
    base.scale = scale;
    if let Some(cap) = max_iters_override().map_err(Failure::Config)? {
        base.max_iters = cap;
    }
    Ok(base)
}

fn cmd_table1(
    eps: f64,
    out: Option<PathBuf>,
    calibrate: bool,
    scale: f64,
    tol: f64,
) -> Result<(), Failure> {
    let cfg = table_config(TableConfig::table1(), eps, scale)?;
    let report = table1(&cfg)?;
    emit(out.as_deref(), &report.to_csv())?;
    eprint!("{}", report.diff_report(tol));
    if calibrate {
        let rows = calibrate_table1(&cfg, &calibration_grid())?;
        let text = calibration_csv(&rows);
        match &out {
            Some(p) => emit(Some(&p.with_extension("calibration.csv")), &text)?,
            None => print!("\n{text}"),
        }
    }
    Ok(())
}

fn cmd_table2(eps: f64, out: Option<PathBuf>, scale: f64, tol: f64) -> Result<(), Failure> {
    let cfg = table_config(TableConfig::table2(), eps, scale)?;
    let report = table2(&cfg)?;
    emit(out.as_deref(), &report.to_csv())?;
    eprint!("{}", report.diff_report(tol));
    Ok(())
}

fn cmd_figure(path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let cfg: FigureConfig = read_json(path)?;
    cfg.validate().map_err(Failure::Config)?;
    let mdp = cfg.env.build(&config_dir(path)).map_err(Failure::Config)?;
    let n_iters = max_iters_override()
        .map_err(Failure::Config)?
        .map_or(cfg.n_iters, |cap| cap.min(cfg.n_iters));
    let labelled: Vec<_> = cfg.schedules.iter().map(|s| (s.to_string(), s.clone())).collect();
    let scale = cfg.bounds.scale(mdp.n_actions());
    let text = match cfg.kind {
        FigureKind::Bounds => curves_csv(&value_bound_curves(&mdp, &labelled, n_iters, scale)?),
        FigureKind::Errors => curves_csv(&value_error_curves(&mdp, &labelled, n_iters)?),
        FigureKind::CviBounds => {
            let cells: Vec<_> = labelled
                .iter()
                .flat_map(|(l, s)| cfg.alphas.iter().map(move |&a| (l.clone(), s.clone(), a)))
                .collect();
            curves_csv(&cvi_bound_curves(&mdp, &cells, n_iters, cfg.bounds.cvi_variant, scale)?)
        }
        FigureKind::Snapshots => snapshot_series(&mdp, &cfg.schedules[0], &cfg.iters)?,
    };
    emit(out.or_else(|| cfg.output.clone()).as_deref(), &text)
}
