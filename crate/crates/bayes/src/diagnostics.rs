use serde::Serialize;

/// Convergence statistics of one scalar quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    /// Whether this quantity decides if a fit converged.
    pub gated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub params: Vec<ParamDiagnostic>,
}

impl Diagnostics {
    /// The gated quantity with the largest R-hat; NaN counts as largest.
    pub fn worst(&self) -> Option<&ParamDiagnostic> {
        self.params.iter().filter(|p| p.gated).max_by(|a, b| {
            let key = |x: f64| if x.is_nan() { f64::INFINITY } else { x };
            key(a.rhat).total_cmp(&key(b.rhat))
        })
    }

    pub fn max_rhat(&self) -> f64 {
        self.worst().map_or(f64::NAN, |p| if p.rhat.is_nan() { f64::INFINITY } else { p.rhat })
    }

    pub fn min_ess(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.gated)
            .map(|p| p.ess)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, name: &str) -> Option<&ParamDiagnostic> {
        self.params.iter().find(|p| p.name == name)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Each chain cut into its first and second half (an odd middle draw is
/// dropped).
fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Within-chain variance and the pooled variance estimate.
fn variances(parts: &[Vec<f64>]) -> (f64, f64) {
    let n = parts[0].len() as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = parts.iter().map(|p| sample_var(p)).sum::<f64>() / parts.len() as f64;
    let b_over_n = sample_var(&means);
    (w, (n - 1.0) / n * w + b_over_n)
}

/// Split potential scale reduction. Needs at least four draws per chain.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let parts = split(chains);
    if parts.is_empty() || parts[0].len() < 2 {
        return f64::NAN;
    }
    let (w, var_plus) = variances(&parts);
    if w == 0.0 {
        return if var_plus == 0.0 { 1.0 } else { f64::INFINITY };
    }
    (var_plus / w).sqrt()
}

/// Effective sample size over split chains, with autocorrelations from the
/// variogram and Geyer's initial monotone positive sequence.
pub fn effective_sample_size(chains: &[&[f64]]) -> f64 {
    let parts = split(chains);
    if parts.is_empty() || parts[0].len() < 4 {
        return f64::NAN;
    }
    let m = parts.len() as f64;
    let n = parts[0].len();
    let (_, var_plus) = variances(&parts);
    let total = m * n as f64;
    if var_plus == 0.0 {
        return total;
    }
    let rho = |t: usize| {
        let v: f64 = parts
            .iter()
            .map(|p| (t..n).map(|i| (p[i] - p[i - t]).powi(2)).sum::<f64>())
            .sum::<f64>()
            / (m * (n - t) as f64);
        1.0 - v / (2.0 * var_plus)
    };
    // tau = -1 + 2 * sum of monotone, positive pair sums starting at lag 0
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let r0 = if t == 0 { 1.0 } else { rho(t) };
        let pair = r0 + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        t += 2;
    }
    // caps antithetic chains at total * log10(total)
    total / tau.max(1.0 / total.log10())
}
