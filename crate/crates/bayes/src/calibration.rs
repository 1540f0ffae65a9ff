use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::model::ModelSpec;
use crate::sampler::{sample_posterior, SamplerConfig};
use crate::simulate::{simulate, TrueParams};
use crate::summary::{accuracy_summary, AccuracyDraws};
use crate::FitError;

/// Repeated simulate-then-fit cycles with abilities drawn from
/// `Normal(0, alpha_sd)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationConfig {
    pub cycles: usize,
    pub samples: usize,
    pub approaches: usize,
    pub alpha_sd: f64,
    pub sigma_theta: f64,
    pub seed: u64,
    pub spec: ModelSpec,
    pub sampler: SamplerConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            cycles: 100,
            samples: 100,
            approaches: 3,
            alpha_sd: 1.0,
            sigma_theta: 1.0,
            seed: 0,
            spec: ModelSpec::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    pub true_accuracy: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    /// Share of cycles whose 95% interval covers the true accuracy, per approach.
    pub coverage: Vec<f64>,
    /// Share of fits whose gated R-hat stayed within the threshold.
    pub converged: f64,
    pub cycles: Vec<CycleResult>,
}

pub fn calibrate(cfg: &CalibrationConfig) -> Result<CalibrationReport, FitError> {
    let alpha_dist = Normal::new(0.0, cfg.alpha_sd).map_err(|e| FitError::InvalidConfig(e.to_string()))?;
    let cycles: Vec<CycleResult> = (0..cfg.cycles)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let params = TrueParams {
                alpha: (0..cfg.approaches).map(|_| alpha_dist.sample(&mut rng)).collect(),
                sigma_theta: cfg.sigma_theta,
                samples: cfg.samples,
            };
            let sim = simulate(&params, cfg.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let sampler = SamplerConfig {
                seed: cfg.sampler.seed.wrapping_add(i as u64),
                ..cfg.sampler
            };
            let post = sample_posterior(&sim.observations, &cfg.spec, &sampler)?;
            let rows = accuracy_summary(&AccuracyDraws::from_posterior(&post));
            Ok(CycleResult {
                true_accuracy: sim.true_accuracy,
                lower: rows.iter().map(|r| r.lower).collect(),
                upper: rows.iter().map(|r| r.upper).collect(),
                max_rhat: post.diagnostics.max_rhat(),
            })
        })
        .collect::<Result<_, FitError>>()?;

    let n = cycles.len() as f64;
    let coverage = (0..cfg.approaches)
        .map(|a| {
            cycles
                .iter()
                .filter(|c| c.lower[a] <= c.true_accuracy[a] && c.true_accuracy[a] <= c.upper[a])
                .count() as f64
                / n
        })
        .collect();
    let converged = cycles.iter().filter(|c| c.max_rhat <= cfg.sampler.rhat_threshold).count() as f64 / n;
    Ok(CalibrationReport {
        config: *cfg,
        coverage,
        converged,
        cycles,
    })
}
