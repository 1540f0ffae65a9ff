use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::model::inv_logit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub alpha: Vec<f64>,
    pub sigma_theta: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub observations: ObservationMatrix,
    pub theta: Vec<f64>,
    /// Mean over the simulated samples of `inv_logit(alpha[a] + theta[s])`.
    pub true_accuracy: Vec<f64>,
}

/// Draw sample difficulties, then one Bernoulli outcome per cell.
pub fn simulate(params: &TrueParams, seed: u64) -> Simulation {
    assert!(params.samples >= 1, "need at least one sample");
    assert!(params.sigma_theta >= 0.0, "sigma_theta must be nonnegative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..params.samples)
        .map(|_| params.sigma_theta * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut columns = vec![Vec::with_capacity(params.samples); params.alpha.len()];
    for t in &theta {
        for (a, col) in columns.iter_mut().enumerate() {
            col.push(Some(rng.random::<f64>() < inv_logit(params.alpha[a] + t)));
        }
    }
    let true_accuracy = params
        .alpha
        .iter()
        .map(|a| theta.iter().map(|t| inv_logit(a + t)).sum::<f64>() / theta.len() as f64)
        .collect();
    let names = (0..params.alpha.len()).map(|a| format!("a{a}")).collect();
    Simulation {
        observations: ObservationMatrix::from_columns(names, &columns).expect("rectangular by construction"),
        theta,
        true_accuracy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let p = TrueParams {
            alpha: vec![0.5, -0.5],
            sigma_theta: 1.0,
            samples: 50,
        };
        assert_eq!(simulate(&p, 3), simulate(&p, 3));
        assert_ne!(simulate(&p, 3).observations, simulate(&p, 4).observations);
    }

    #[test]
    fn coin_flips_average_one_half() {
        let p = TrueParams {
            alpha: vec![0.0],
            sigma_theta: 0.0,
            samples: 20_000,
        };
        let sim = simulate(&p, 1);
        let (c, n) = sim.observations.counts(0);
        assert_eq!(n, 20_000);
        assert!((c as f64 / n as f64 - 0.5).abs() < 0.015);
        assert_eq!(sim.true_accuracy, [0.5]);
    }
}
