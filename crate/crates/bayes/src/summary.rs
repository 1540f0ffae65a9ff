use serde::Serialize;

use crate::sampler::Posterior;

/// Default half-width of the region of practical equivalence, in accuracy.
pub const DEFAULT_ROPE: f64 = 0.05;

/// Linear interpolation between order statistics (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of no values");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-draw posterior-predictive accuracy of every approach.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyDraws {
    pub approaches: Vec<String>,
    /// `draw * A + a`
    values: Vec<f64>,
}

impl AccuracyDraws {
    pub fn from_posterior(p: &Posterior) -> Self {
        let a = p.approaches.len();
        let mut values = Vec::with_capacity(p.n_draws() * a);
        for d in 0..p.n_draws() {
            for i in 0..a {
                values.push(p.accuracy(d, i));
            }
        }
        Self {
            approaches: p.approaches.clone(),
            values,
        }
    }

    pub fn n_draws(&self) -> usize {
        self.values.len() / self.approaches.len().max(1)
    }

    pub fn get(&self, draw: usize, a: usize) -> f64 {
        self.values[draw * self.approaches.len() + a]
    }

    pub fn column(&self, a: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_draws()).map(move |d| self.get(d, a))
    }

    pub fn index_of(&self, approach: &str) -> Option<usize> {
        self.approaches.iter().position(|x| x == approach)
    }

    /// `acc[a] - acc[b]` for every draw.
    pub fn diff_draws(&self, a: usize, b: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|d| self.get(d, a) - self.get(d, b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub approach: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Posterior mean and central 95% interval of each approach's accuracy.
pub fn accuracy_summary(acc: &AccuracyDraws) -> Vec<AccuracyRow> {
    (0..acc.approaches.len())
        .map(|a| {
            let v = sorted(acc.column(a));
            AccuracyRow {
                approach: acc.approaches[a].clone(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                lower: quantile(&v, 0.025),
                upper: quantile(&v, 0.975),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseDiff {
    pub a: String,
    pub b: String,
    pub rope: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// Draws with `diff < -rope`, `|diff| <= rope` and `diff > rope`.
    pub n_worse: usize,
    pub n_equiv: usize,
    pub n_better: usize,
    pub p_worse: f64,
    pub p_equiv: f64,
    pub p_better: f64,
}

/// Compare approach `a` against `b` (positive differences favour `a`).
pub fn pairwise_diff(acc: &AccuracyDraws, a: usize, b: usize, rope: f64) -> PairwiseDiff {
    assert_ne!(a, b, "an approach compared with itself");
    let diffs = acc.diff_draws(a, b);
    let (mut w, mut e, mut g) = (0, 0, 0);
    for d in &diffs {
        if d.abs() <= rope {
            e += 1;
        } else if *d < 0.0 {
            w += 1;
        } else {
            g += 1;
        }
    }
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let v = sorted(diffs.into_iter());
    PairwiseDiff {
        a: acc.approaches[a].clone(),
        b: acc.approaches[b].clone(),
        rope,
        mean,
        lower: quantile(&v, 0.025),
        upper: quantile(&v, 0.975),
        n_worse: w,
        n_equiv: e,
        n_better: g,
        p_worse: w as f64 / n,
        p_equiv: e as f64 / n,
        p_better: g as f64 / n,
    }
}

/// Every ordered pair `a < b`, in approach order.
pub fn all_pairs(acc: &AccuracyDraws, rope: f64) -> Vec<PairwiseDiff> {
    let n = acc.approaches.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            out.push(pairwise_diff(acc, a, b, rope));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::inv_logit;

    /// Two approaches, two samples, two draws in two chains.
    fn hand_posterior(alpha: [[f64; 2]; 2], theta: [[f64; 2]; 2]) -> Posterior {
        Posterior::from_draws(
            vec!["a".into(), "b".into()],
            vec!["s0".into(), "s1".into()],
            2,
            alpha.concat(),
            theta.concat(),
            vec![1.0, 1.0],
            0,
        )
        .unwrap()
    }

    #[test]
    fn zero_effects_give_one_half() {
        let acc = AccuracyDraws::from_posterior(&hand_posterior([[0.0; 2]; 2], [[0.0; 2]; 2]));
        assert!((0..2).all(|d| acc.get(d, 0) == 0.5 && acc.get(d, 1) == 0.5));
    }

    #[test]
    fn hand_built_summary() {
        let p = hand_posterior([[1.0, -1.0], [0.5, 0.0]], [[0.0, 2.0], [-1.0, 1.0]]);
        let acc = AccuracyDraws::from_posterior(&p);
        let d0 = (inv_logit(1.0) + inv_logit(3.0)) / 2.0;
        let d1 = (inv_logit(-0.5) + inv_logit(1.5)) / 2.0;
        assert!((acc.get(0, 0) - d0).abs() < 1e-15);
        assert!((acc.get(1, 0) - d1).abs() < 1e-15);
        let row = &accuracy_summary(&acc)[0];
        assert!((row.mean - (d0 + d1) / 2.0).abs() < 1e-15);
        assert!((row.lower - (d1 + 0.025 * (d0 - d1))).abs() < 1e-15);
        assert!(row.lower <= row.mean && row.mean <= row.upper);
    }

    #[test]
    fn rope_counts_by_hand() {
        // per-draw differences 0.02 and 0.08
        let acc = AccuracyDraws {
            approaches: vec!["a".into(), "b".into()],
            values: vec![0.62, 0.60, 0.78, 0.70],
        };
        let d = acc.diff_draws(0, 1);
        assert!((d[0] - 0.02).abs() < 1e-12 && (d[1] - 0.08).abs() < 1e-12);
        let p = pairwise_diff(&acc, 0, 1, DEFAULT_ROPE);
        assert_eq!((p.n_worse, p.n_equiv, p.n_better), (0, 1, 1));
        assert_eq!((p.p_equiv, p.p_better), (0.5, 0.5));
        let q = pairwise_diff(&acc, 1, 0, DEFAULT_ROPE);
        assert_eq!((q.p_worse, q.p_equiv), (0.5, 0.5));
    }

    #[test]
    fn identical_draws_are_equivalent() {
        let p = hand_posterior([[0.3, 0.3], [-0.2, -0.2]], [[0.1, 0.4], [0.0, -1.0]]);
        let acc = AccuracyDraws::from_posterior(&p);
        assert!(acc.diff_draws(0, 1).iter().all(|d| *d == 0.0));
        assert_eq!(pairwise_diff(&acc, 0, 1, DEFAULT_ROPE).p_equiv, 1.0);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(quantile(&[7.0], 0.975), 7.0);
    }
}
