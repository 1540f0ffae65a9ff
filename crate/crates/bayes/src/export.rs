use std::io::Write;

use crate::sampler::Posterior;
use crate::FitError;

/// Write every draw as `draw,chain,parameter,value` rows. Draw indices count
/// within their chain.
pub fn write_posterior_csv<W: Write>(p: &Posterior, out: W) -> Result<(), FitError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| FitError::Export(e.to_string());
    w.write_record(["draw", "chain", "parameter", "value"]).map_err(err)?;
    for d in 0..p.n_draws() {
        let chain = p.chain_of(d).to_string();
        let draw = (d % p.draws_per_chain).to_string();
        let mut row = |name: &str, v: f64| w.write_record([draw.as_str(), chain.as_str(), name, &v.to_string()]);
        for (a, name) in p.approaches.iter().enumerate() {
            row(&format!("alpha[{name}]"), p.alpha(d, a)).map_err(err)?;
        }
        for (s, name) in p.samples.iter().enumerate() {
            row(&format!("theta[{name}]"), p.theta(d, s)).map_err(err)?;
        }
        row("sigma_theta", p.sigma(d)).map_err(err)?;
    }
    w.flush().map_err(|e| FitError::Export(e.to_string()))
}
