use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::diagnostics::{effective_sample_size, split_rhat, Diagnostics, ParamDiagnostic};
use crate::model::{inv_logit, log_lik, ModelSpec};
use crate::FitError;

/// Target acceptance rate of the one-dimensional random-walk updates.
const TARGET_ACCEPT: f64 = 0.44;
/// Warmup iterations between step size adjustments.
const ADAPT_BATCH: usize = 50;
const REJECTION_ATTEMPTS: usize = 200;
const SIGMA_REPEATS: usize = 3;
const ALPHA_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    /// Kept draws per chain.
    pub draws: usize,
    /// Sweeps per kept draw.
    pub thin: usize,
    pub seed: u64,
    /// Largest acceptable split R-hat of the gated quantities.
    pub rhat_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            thin: 1,
            seed: 0,
            rhat_threshold: 1.01,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.chains < 2 {
            return Err(FitError::InvalidConfig("at least two chains are needed for R-hat".into()));
        }
        if self.draws < 4 || self.thin == 0 {
            return Err(FitError::InvalidConfig("need at least 4 draws and thin >= 1".into()));
        }
        if !(self.rhat_threshold >= 1.0) {
            return Err(FitError::InvalidConfig("rhat_threshold must be at least 1".into()));
        }
        Ok(())
    }
}

/// Joint posterior draws, chains concatenated in chain order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    pub approaches: Vec<String>,
    pub samples: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// `draw * A + a`
    alpha: Vec<f64>,
    /// `draw * S + s`
    theta: Vec<f64>,
    sigma: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub seed: u64,
}

impl Posterior {
    /// Assemble a posterior from raw draws and compute its diagnostics.
    /// `alpha` and `theta` are draw-major.
    pub fn from_draws(
        approaches: Vec<String>,
        samples: Vec<String>,
        chains: usize,
        alpha: Vec<f64>,
        theta: Vec<f64>,
        sigma: Vec<f64>,
        seed: u64,
    ) -> Result<Self, FitError> {
        let d = sigma.len();
        if chains == 0 || d % chains != 0 || alpha.len() != d * approaches.len() || theta.len() != d * samples.len() {
            return Err(FitError::InvalidConfig("draw arrays do not match the posterior shape".into()));
        }
        if sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(FitError::InvalidConfig("sigma_theta must be positive in every draw".into()));
        }
        let mut p = Self {
            approaches,
            samples,
            chains,
            draws_per_chain: d / chains,
            alpha,
            theta,
            sigma,
            diagnostics: Diagnostics::default(),
            seed,
        };
        p.diagnostics = p.compute_diagnostics();
        Ok(p)
    }

    pub fn n_draws(&self) -> usize {
        self.sigma.len()
    }

    pub fn alpha(&self, draw: usize, a: usize) -> f64 {
        self.alpha[draw * self.approaches.len() + a]
    }

    pub fn theta(&self, draw: usize, s: usize) -> f64 {
        self.theta[draw * self.samples.len() + s]
    }

    pub fn sigma(&self, draw: usize) -> f64 {
        self.sigma[draw]
    }

    /// Chain of a draw index.
    pub fn chain_of(&self, draw: usize) -> usize {
        draw / self.draws_per_chain
    }

    /// Posterior-predictive accuracy of approach `a` in one draw: the mean
    /// over samples of `inv_logit(alpha[a] + theta[s])`.
    pub fn accuracy(&self, draw: usize, a: usize) -> f64 {
        let alpha = self.alpha(draw, a);
        let th = &self.theta[draw * self.samples.len()..(draw + 1) * self.samples.len()];
        th.iter().map(|t| inv_logit(alpha + t)).sum::<f64>() / th.len() as f64
    }

    fn per_chain(&self, f: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (c * self.draws_per_chain..(c + 1) * self.draws_per_chain)
                    .map(&f)
                    .collect()
            })
            .collect()
    }

    fn compute_diagnostics(&self) -> Diagnostics {
        let diag = |name: String, series: Vec<Vec<f64>>, gated: bool| {
            let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
            ParamDiagnostic {
                name,
                rhat: split_rhat(&refs),
                ess: effective_sample_size(&refs),
                gated,
            }
        };
        let mut params = Vec::new();
        for (a, name) in self.approaches.iter().enumerate() {
            params.push(diag(format!("alpha[{name}]"), self.per_chain(|d| self.alpha(d, a)), true));
        }
        for (a, name) in self.approaches.iter().enumerate() {
            params.push(diag(format!("acc[{name}]"), self.per_chain(|d| self.accuracy(d, a)), true));
        }
        params.push(diag("sigma_theta".into(), self.per_chain(|d| self.sigma(d)), true));
        for (s, name) in self.samples.iter().enumerate() {
            params.push(diag(format!("theta[{name}]"), self.per_chain(|d| self.theta(d, s)), false));
        }
        Diagnostics { params }
    }
}

/// Observed cells by row and by column. Rows with identical observations
/// share a pattern; the difficulty-integrated likelihood depends on the row
/// only through its pattern.
struct Layout {
    rows: Vec<Vec<(usize, bool)>>,
    cols: Vec<Vec<(usize, bool)>>,
    patterns: Vec<(Vec<(usize, bool)>, f64)>,
}

impl Layout {
    fn new(m: &ObservationMatrix) -> Self {
        let mut rows = vec![Vec::new(); m.n_samples()];
        let mut cols = vec![Vec::new(); m.n_approaches()];
        for (s, row) in rows.iter_mut().enumerate() {
            for (a, col) in cols.iter_mut().enumerate() {
                if let Some(y) = m.cell(s, a).observed() {
                    row.push((a, y));
                    col.push((s, y));
                }
            }
        }
        let mut patterns: Vec<(Vec<(usize, bool)>, f64)> = Vec::new();
        for row in &rows {
            match patterns.iter_mut().find(|(p, _)| p == row) {
                Some((_, n)) => *n += 1.0,
                None => patterns.push((row.clone(), 1.0)),
            }
        }
        Self { rows, cols, patterns }
    }
}

/// Trapezoid nodes for integrating against the standard normal density.
/// The integrands are analytic in a strip around the real line, so the
/// error decays exponentially with the node spacing.
const QUAD_HALF_WIDTH: f64 = 7.0;
const QUAD_NODES: usize = 57;

fn quadrature() -> Vec<(f64, f64)> {
    let h = 2.0 * QUAD_HALF_WIDTH / (QUAD_NODES - 1) as f64;
    (0..QUAD_NODES)
        .map(|i| {
            let z = -QUAD_HALF_WIDTH + h * i as f64;
            (z, (h / (2.0 * std::f64::consts::PI).sqrt()).ln() - 0.5 * z * z)
        })
        .collect()
}

/// Random-walk scale with acceptance bookkeeping for one coordinate.
#[derive(Clone, Copy)]
struct Step {
    scale: f64,
    accepted: u32,
}

impl Step {
    fn new(scale: f64) -> Self {
        Self { scale, accepted: 0 }
    }

    /// Move the scale towards the target acceptance rate after a batch.
    fn adapt(&mut self, batch: usize, delta: f64) {
        let rate = self.accepted as f64 / batch as f64;
        self.scale *= if rate > TARGET_ACCEPT { delta.exp() } else { (-delta).exp() };
        self.accepted = 0;
    }
}

struct Chain<'a> {
    layout: &'a Layout,
    spec: ModelSpec,
    alpha: Vec<f64>,
    theta: Vec<f64>,
    log_sigma: f64,
    theta_step: Vec<Step>,
    alpha_step: Vec<Step>,
    sigma_step: Step,
    quad: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

fn accept(rng: &mut ChaCha8Rng, log_ratio: f64) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

impl<'a> Chain<'a> {
    fn new(layout: &'a Layout, spec: ModelSpec, seed: u64, chain: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chain as u64);
        // dispersed starting points
        let log_sigma = 0.5 * rng.sample::<f64, _>(StandardNormal);
        let sigma = log_sigma.exp();
        let alpha = (0..layout.cols.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let theta = (0..layout.rows.len())
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            layout,
            spec,
            alpha,
            theta,
            log_sigma,
            theta_step: vec![Step::new(1.0); layout.rows.len()],
            alpha_step: vec![Step::new(0.3); layout.cols.len()],
            sigma_step: Step::new(0.3),
            quad: quadrature(),
            rng,
        }
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn row_ll(&self, s: usize, theta: f64) -> f64 {
        self.layout.rows[s].iter().map(|&(a, y)| log_lik(self.alpha[a] + theta, y)).sum()
    }

    fn col_ll(&self, a: usize, alpha: f64) -> f64 {
        self.layout.cols[a].iter().map(|&(s, y)| log_lik(alpha + self.theta[s], y)).sum()
    }

    /// Log likelihood of all rows with every difficulty integrated out.
    fn marginal_ll(&self, sigma: f64) -> f64 {
        self.layout
            .patterns
            .iter()
            .map(|(cells, n)| {
                let terms: Vec<f64> = self
                    .quad
                    .iter()
                    .map(|&(z, lw)| lw + cells.iter().map(|&(a, y)| log_lik(self.alpha[a] + sigma * z, y)).sum::<f64>())
                    .collect();
                let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                n * (max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln())
            })
            .sum()
    }

    /// Log density of `log sigma` under the half-normal prior, Jacobian included.
    fn log_sigma_prior(&self, u: f64) -> f64 {
        let s = u.exp();
        -0.5 * (s / self.spec.prior_sigma_scale).powi(2) + u
    }

    /// Exact draw from the conditional of one difficulty by rejection against
    /// its prior, since the row likelihood never exceeds one. After
    /// `REJECTION_ATTEMPTS` failures a random-walk step is taken instead; the
    /// failure probability does not depend on the current difficulty, so
    /// the mixture of the two kernels keeps the conditional invariant.
    fn update_theta(&mut self, s: usize, sigma: f64) {
        for _ in 0..REJECTION_ATTEMPTS {
            let prop = sigma * self.normal();
            if self.rng.random::<f64>().ln() < self.row_ll(s, prop) {
                self.theta[s] = prop;
                return;
            }
        }
        let cur = self.theta[s];
        let prop = cur + self.theta_step[s].scale * self.normal();
        let lr = self.row_ll(s, prop) - self.row_ll(s, cur) - (prop * prop - cur * cur) / (2.0 * sigma * sigma);
        if accept(&mut self.rng, lr) {
            self.theta[s] = prop;
            self.theta_step[s].accepted += 1;
        }
    }

    fn sweep(&mut self) {
        // sigma with the difficulties integrated out, then the difficulties
        // from their exact conditional: together one block update of both
        let mut cur_ll = self.marginal_ll(self.log_sigma.exp());
        for _ in 0..SIGMA_REPEATS {
            let cur = self.log_sigma;
            let prop = cur + self.sigma_step.scale * self.normal();
            let prop_ll = self.marginal_ll(prop.exp());
            let lr = prop_ll - cur_ll + self.log_sigma_prior(prop) - self.log_sigma_prior(cur);
            if accept(&mut self.rng, lr) {
                self.log_sigma = prop;
                cur_ll = prop_ll;
                self.sigma_step.accepted += 1;
            }
        }
        let sigma = self.log_sigma.exp();
        for s in 0..self.theta.len() {
            self.update_theta(s, sigma);
        }

        let alpha_var = self.spec.prior_alpha_sd.powi(2);
        for a in (0..self.alpha.len()).cycle().take(ALPHA_REPEATS * self.alpha.len()) {
            let cur = self.alpha[a];
            let prop = cur + self.alpha_step[a].scale * self.normal();
            let lr = self.col_ll(a, prop) - self.col_ll(a, cur) - (prop * prop - cur * cur) / (2.0 * alpha_var);
            if accept(&mut self.rng, lr) {
                self.alpha[a] = prop;
                self.alpha_step[a].accepted += 1;
            }
        }

        // exact draw along alpha + c, theta - c, which leaves the likelihood unchanged
        let sigma2 = sigma * sigma;
        let n = self.theta.len() as f64;
        let precision = self.alpha.len() as f64 / alpha_var + n / sigma2;
        let centre = (-self.alpha.iter().sum::<f64>() / alpha_var + self.theta.iter().sum::<f64>() / sigma2) / precision;
        let c = centre + self.normal() / precision.sqrt();
        self.alpha.iter_mut().for_each(|a| *a += c);
        self.theta.iter_mut().for_each(|t| *t -= c);
    }

    fn adapt(&mut self, batch_index: usize) {
        let delta = (1.0 / (batch_index as f64).sqrt()).min(1.0);
        for st in &mut self.theta_step {
            st.adapt(ADAPT_BATCH, delta);
        }
        for st in &mut self.alpha_step {
            st.adapt(ADAPT_BATCH * ALPHA_REPEATS, delta);
        }
        self.sigma_step.adapt(ADAPT_BATCH * SIGMA_REPEATS, delta);
    }

    fn reset_counters(&mut self) {
        for st in self.theta_step.iter_mut().chain(self.alpha_step.iter_mut()) {
            st.accepted = 0;
        }
        self.sigma_step.accepted = 0;
    }

    /// Warm up with step size adaptation, then collect draws with fixed steps.
    fn run(mut self, cfg: &SamplerConfig) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        for i in 1..=cfg.warmup {
            self.sweep();
            if i % ADAPT_BATCH == 0 {
                self.adapt(i / ADAPT_BATCH);
            }
        }
        self.reset_counters();
        let mut alpha = Vec::with_capacity(cfg.draws * self.alpha.len());
        let mut theta = Vec::with_capacity(cfg.draws * self.theta.len());
        let mut sigma = Vec::with_capacity(cfg.draws);
        for _ in 0..cfg.draws {
            for _ in 0..cfg.thin {
                self.sweep();
            }
            alpha.extend_from_slice(&self.alpha);
            theta.extend_from_slice(&self.theta);
            sigma.push(self.log_sigma.exp());
        }
        (alpha, theta, sigma)
    }
}

/// Draw from the posterior without judging convergence. Chains run in
/// parallel; the result depends only on the data, the spec and the config.
pub fn sample_posterior(m: &ObservationMatrix, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<Posterior, FitError> {
    spec.validate()?;
    cfg.validate()?;
    m.check_fittable()?;
    let layout = Layout::new(m);
    let runs: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| Chain::new(&layout, *spec, cfg.seed, c).run(cfg))
        .collect();
    let (mut alpha, mut theta, mut sigma) = (Vec::new(), Vec::new(), Vec::new());
    for (a, t, s) in runs {
        alpha.extend(a);
        theta.extend(t);
        sigma.extend(s);
    }
    Posterior::from_draws(
        m.approaches.clone(),
        m.samples.clone(),
        cfg.chains,
        alpha,
        theta,
        sigma,
        cfg.seed,
    )
}

/// Draw from the posterior and fail when a gated quantity has not converged.
pub fn fit(m: &ObservationMatrix, spec: &ModelSpec, cfg: &SamplerConfig) -> Result<Posterior, FitError> {
    let p = sample_posterior(m, spec, cfg)?;
    if let Some(worst) = p.diagnostics.worst() {
        if !(worst.rhat <= cfg.rhat_threshold) {
            return Err(FitError::NonConvergence {
                parameter: worst.name.clone(),
                rhat: worst.rhat,
                threshold: cfg.rhat_threshold,
                diagnostics: Box::new(p.diagnostics.clone()),
            });
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_integrates_normal_moments() {
        let q = quadrature();
        let mass: f64 = q.iter().map(|(_, lw)| lw.exp()).sum();
        let second: f64 = q.iter().map(|(z, lw)| z * z * lw.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9, "{mass}");
        assert!((second - 1.0).abs() < 1e-9, "{second}");
    }

    #[test]
    fn marginal_matches_fine_midpoint_rule() {
        let m = ObservationMatrix::from_columns(
            vec!["a".into(), "b".into()],
            &[
                vec![Some(true), Some(false), Some(true), None],
                vec![Some(true), Some(true), Some(false), Some(false)],
            ],
        )
        .unwrap();
        let layout = Layout::new(&m);
        assert_eq!(layout.patterns.len(), 4);
        let mut chain = Chain::new(&layout, ModelSpec::default(), 0, 0);
        chain.alpha = vec![0.4, -0.7];
        for sigma in [0.2, 1.0, 3.0] {
            let mut direct = 0.0;
            for row in &layout.rows {
                let n = 200_000;
                let h = 20.0 / n as f64;
                let mut acc = 0.0;
                for i in 0..n {
                    let z = -10.0 + h * (i as f64 + 0.5);
                    let ll: f64 = row.iter().map(|&(a, y)| log_lik(chain.alpha[a] + sigma * z, y)).sum();
                    acc += (ll - 0.5 * z * z).exp() * h;
                }
                direct += (acc / (2.0 * std::f64::consts::PI).sqrt()).ln();
            }
            let quad = chain.marginal_ll(sigma);
            assert!((quad - direct).abs() < 1e-7, "sigma {sigma}: {quad} vs {direct}");
        }
    }

    #[test]
    fn config_is_checked() {
        assert!(SamplerConfig { chains: 1, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { thin: 0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig::default().validate().is_ok());
    }

    #[test]
    fn thinning_keeps_the_requested_draw_count() {
        let m = ObservationMatrix::from_columns(vec!["a".into()], &[vec![Some(true), Some(false), Some(true)]]).unwrap();
        let cfg = SamplerConfig {
            warmup: 100,
            draws: 30,
            thin: 3,
            ..SamplerConfig::default()
        };
        let p = sample_posterior(&m, &ModelSpec::default(), &cfg).unwrap();
        assert_eq!(p.n_draws(), 120);
        assert_eq!(p.chain_of(119), 3);
    }
}
