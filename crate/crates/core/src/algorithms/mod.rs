//! Iterative schemes. Every run records one [`IterRecord`] per iteration, counted from 1;
//! iteration `N` uses the schedule value `lambda_N`.

mod driver;
mod inject;
mod qvalue;
mod trace;
mod value;

pub use driver::Reference;
pub use inject::{ErrorInjector, InjectMode, NoiseShape};
pub use qvalue::{run_advantage_learning, run_cvi};
pub use trace::{
    policy_snapshot, GridSnapshot, IterRecord, RunOptions, RunTrace, Snapshot, StopMetric,
    StopReason, StopRule, Storage, TraceMeta, DENSE_ITERATES,
};
pub use value::{run_ampi, run_mpi, run_reg_mpi, run_soft_vi};
