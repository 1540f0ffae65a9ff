//! Hierarchical logistic model of per-sample correctness: every approach has
//! an ability, every sample a difficulty, and accuracy is the
//! posterior-predictive mean over the evaluated samples. Includes the MCMC
//! sampler, convergence diagnostics, pairwise comparison against a region of
//! practical equivalence and simulation-based calibration.

mod calibration;
mod data;
mod diagnostics;
mod export;
mod model;
mod sampler;
mod simulate;
mod summary;

pub use calibration::{calibrate, CalibrationConfig, CalibrationReport, CycleResult};
pub use data::{build_dataset, Cell, DataError, ObservationMatrix};
pub use diagnostics::{effective_sample_size, split_rhat, Diagnostics, ParamDiagnostic};
pub use export::write_posterior_csv;
pub use model::{inv_logit, log_lik, softplus, ModelSpec};
pub use sampler::{fit, sample_posterior, Posterior, SamplerConfig};
pub use simulate::{simulate, Simulation, TrueParams};
pub use summary::{
    accuracy_summary, all_pairs, pairwise_diff, quantile, AccuracyDraws, AccuracyRow, PairwiseDiff, DEFAULT_ROPE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("no convergence: R-hat of {parameter} is {rhat:.4} (threshold {threshold})")]
    NonConvergence {
        parameter: String,
        rhat: f64,
        threshold: f64,
        diagnostics: Box<Diagnostics>,
    },
    #[error("posterior export: {0}")]
    Export(String),
}
