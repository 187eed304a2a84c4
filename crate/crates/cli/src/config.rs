use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regdp_core::algorithms::{ErrorInjector, StopMetric, StopRule};
use regdp_core::bounds::{CviVariant, TempScale};
use regdp_core::cliff::{build_cliff, CliffConfig};
use regdp_core::mdp::{random_mdp, HARD_ITERATION_CAP};
use regdp_core::{Schedule, TabularMDP};
use serde::Deserialize;

/// Environment source of a run.
#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Cliff(CliffConfig),
    /// MDP JSON file, relative paths resolved against the config file.
    File { path: PathBuf },
    Random {
        seed: u64,
        n_states: usize,
        n_actions: usize,
        discount: f64,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Cliff(CliffConfig::default())
    }
}

impl EnvSpec {
    pub fn build(&self, base: &Path) -> anyhow::Result<TabularMDP> {
        Ok(match self {
            EnvSpec::Cliff(cfg) => build_cliff(cfg)?,
            EnvSpec::File { path } => {
                let path = base.join(path);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading MDP file {}", path.display()))?;
                TabularMDP::from_json(&text)?
            }
            EnvSpec::Random {
                seed,
                n_states,
                n_actions,
                discount,
            } => random_mdp(&mut ChaCha8Rng::seed_from_u64(*seed), *n_states, *n_actions, *discount)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mpi,
    Ampi,
    RegMpi,
    SoftVi,
    Al,
    Cvi,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub metric: Option<StopMetric>,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self {
            eps: Some(1e-8),
            max_iters: None,
            metric: None,
        }
    }
}

impl StopSpec {
    pub fn rule(&self) -> anyhow::Result<StopRule> {
        let cap = max_iters_override()?.or(self.max_iters).unwrap_or(HARD_ITERATION_CAP);
        let rule = match self.eps {
            Some(eps) => StopRule::eps(eps, cap),
            None if self.max_iters.is_some() || max_iters_override()?.is_some() => StopRule::iterations(cap),
            None => bail!("stop needs eps or max_iters"),
        };
        Ok(match self.metric {
            Some(m) => rule.with_metric(m),
            None => rule,
        })
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSpec {
    pub include_log_a: bool,
    pub cvi_variant: CviVariant,
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            include_log_a: true,
            cvi_variant: CviVariant::default(),
        }
    }
}

impl BoundSpec {
    pub fn scale(&self, n_actions: usize) -> TempScale {
        if self.include_log_a {
            TempScale::log_a(n_actions)
        } else {
            TempScale::none()
        }
    }
}

/// One algorithm run.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    pub m: Option<usize>,
    pub alpha: Option<f64>,
    pub schedule: Option<Schedule>,
    pub injector: Option<ErrorInjector>,
    #[serde(default)]
    pub stop: StopSpec,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub bounds: BoundSpec,
}

impl RunConfig {
    /// Rejects fields that the chosen algorithm does not use, and fills the seed into the injector.
    pub fn validate(&mut self) -> anyhow::Result<()> {
        use Algorithm::*;
        let algo = self.algorithm;
        if self.alpha.is_some() && !matches!(algo, Al | Cvi) {
            bail!("alpha only applies to al and cvi, not {algo:?}");
        }
        if matches!(algo, Al | Cvi) && self.alpha.is_none() {
            bail!("{algo:?} needs alpha");
        }
        if self.m.is_some() && !matches!(algo, Mpi | Ampi | RegMpi) {
            bail!("m only applies to mpi, ampi and reg_mpi, not {algo:?}");
        }
        if self.m == Some(0) {
            bail!("m must be at least 1");
        }
        if self.schedule.is_some() && !matches!(algo, RegMpi | SoftVi | Cvi) {
            bail!("schedule only applies to reg_mpi, soft_vi and cvi, not {algo:?}");
        }
        if self.schedule.is_none() && matches!(algo, RegMpi | SoftVi | Cvi) {
            bail!("{algo:?} needs a schedule");
        }
        if self.injector.is_some() && !matches!(algo, Ampi | Al) {
            bail!("injector only applies to ampi and al, not {algo:?}");
        }
        if let (Some(seed), Some(inj)) = (self.seed, self.injector.as_mut()) {
            inj.seed = seed;
        }
        self.stop.rule()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    /// Soft-VI error, bound and rate envelope per schedule.
    Bounds,
    /// Soft-VI error curves only.
    Errors,
    /// CVI regret and bound per schedule and alpha.
    CviBounds,
    /// Per-cell values and greedy actions of exact and soft VI.
    Snapshots,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub kind: FigureKind,
    #[serde(default)]
    pub env: EnvSpec,
    pub schedules: Vec<Schedule>,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default = "default_figure_iters")]
    pub n_iters: usize,
    /// Snapshot iterations.
    #[serde(default)]
    pub iters: Vec<usize>,
    #[serde(default)]
    pub bounds: BoundSpec,
    pub output: Option<PathBuf>,
}

fn default_figure_iters() -> usize {
    500
}

impl FigureConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schedules.is_empty() {
            bail!("figure needs at least one schedule");
        }
        if self.n_iters == 0 {
            bail!("n_iters must be at least 1");
        }
        match self.kind {
            FigureKind::CviBounds if self.alphas.is_empty() => bail!("cvi_bounds needs alphas"),
            FigureKind::Snapshots if self.iters.is_empty() => bail!("snapshots needs iters"),
            FigureKind::Snapshots if self.schedules.len() != 1 => {
                bail!("snapshots takes exactly one schedule")
            }
            _ => Ok(()),
        }
    }
}

/// `REGDP_MAX_ITERS`, if set.
pub fn max_iters_override() -> anyhow::Result<Option<usize>> {
    match std::env::var("REGDP_MAX_ITERS") {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .with_context(|| format!("REGDP_MAX_ITERS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("REGDP_MAX_ITERS must be positive");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}
