//! Image-quality metrics, evaluation reports, dose and label-count sweeps,
//! and the desk-scale experiment driver.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod sweep;

pub use experiment::{
    dependency_sweep, prepare_data, run_experiment, run_seed, DependencyRow, ExperimentConfig, ExperimentData, SeedRun,
};
pub use metrics::{reference, rmse_metric, ssim_metric, RmseUnit};
pub use report::{evaluate, Aggregate, EvalReport, RunMeta, SliceRow};
pub use sweep::{dose_sweep, inversions, DoseRow, DoseSweep};
