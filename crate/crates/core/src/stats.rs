//! Small statistical helpers: mean estimates with confidence intervals,
//! Clopper-Pearson bounds, a chi-square goodness-of-fit test and compensated
//! summation.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Normal quantile for a two-sided 95% confidence interval.
pub const Z_95: f64 = 1.959963984540054;

/// A scalar estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_halfwidth: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, ci_halfwidth: 0.0, samples: 0 }
    }

    /// Sample mean with a normal-approximation 95% CI.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 2, "need at least two samples");
        let mean = kahan_sum(xs.iter().copied()) / n as f64;
        let var = kahan_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n as f64 - 1.0);
        Estimate {
            value: mean,
            ci_halfwidth: Z_95 * (var / n as f64).sqrt(),
            samples: n as u64,
        }
    }

    /// Difference of two independent estimates; CI half-widths add in quadrature.
    pub fn minus(self, other: Estimate) -> Estimate {
        Estimate {
            value: self.value - other.value,
            ci_halfwidth: self.ci_halfwidth.hypot(other.ci_halfwidth),
            samples: self.samples.min(other.samples),
        }
    }
}

/// Kahan-compensated sum; keeps long accumulations near 1 ulp.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let y = x - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Clopper-Pearson 95% interval for a binomial proportion.
pub fn clopper_pearson(successes: u64, trials: u64) -> (f64, f64) {
    assert!(successes <= trials && trials > 0);
    let alpha = 0.05;
    let x = successes as f64;
    let n = trials as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Pearson chi-square goodness-of-fit p-value.
///
/// Bins with expected count below `min_expected` (conventionally 5) are pooled
/// with their successors so the chi-square approximation stays valid.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> Result<f64> {
    if observed.len() != probs.len() || observed.is_empty() {
        return Err(Error::InvalidDistribution(
            "observed and expected lengths differ or are empty".into(),
        ));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (&o, &p) in observed.iter().zip(probs) {
        acc_obs += o as f64;
        acc_exp += n * p;
        if acc_exp >= min_expected {
            let d = acc_obs - acc_exp;
            stat += d * d / acc_exp;
            bins += 1;
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        // leftover tail mass pooled into the last bin
        if bins == 0 {
            return Err(Error::InvalidDistribution("all bins below minimum expected count".into()));
        }
        let d = acc_obs - acc_exp;
        stat += d * d / acc_exp;
    }
    if bins < 2 {
        return Err(Error::InvalidDistribution("fewer than two usable bins".into()));
    }
    let dof = (bins - 1) as f64;
    let chi = ChiSquared::new(dof).unwrap();
    Ok(chi.sf(stat))
}

/// L1 (variational) distance between two finite distributions, without the
/// conventional 1/2.
pub fn variational_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    kahan_sum(p.iter().zip(q).map(|(a, b)| (a - b).abs()))
}

/// Plug-in Shannon entropy of a finite distribution, in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -kahan_sum(p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_mean_and_ci() {
        let xs = vec![1.0, 2.0, 3.0, 4.0];
        let e = Estimate::from_samples(&xs);
        assert!((e.value - 2.5).abs() < 1e-12);
        assert!(e.ci_halfwidth > 0.0);
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.06);
        let (lo, hi) = clopper_pearson(100, 100);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.94);
        let (lo, hi) = clopper_pearson(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn chi_square_uniform_fair() {
        // deterministic counts exactly matching a uniform pmf give p-value 1
        let obs = vec![100u64; 8];
        let probs = vec![0.125f64; 8];
        let p = chi_square_gof(&obs, &probs, 5.0).unwrap();
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_bias() {
        let obs = vec![900u64, 100];
        let probs = vec![0.5f64, 0.5];
        let p = chi_square_gof(&obs, &probs, 5.0).unwrap();
        assert!(p < 1e-6);
    }

    #[test]
    fn entropy_uniform() {
        let p = vec![0.25f64; 4];
        assert!((entropy(&p) - (4.0f64).ln()).abs() < 1e-12);
    }
}
