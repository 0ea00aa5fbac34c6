//! The regular mod-fine/coarse channel in one dimension, the psi exponent
//! function and its curvature, Renyi entropy, the rate-gap bookkeeping, and
//! resolvability-divergence estimates for random linear codes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::code::{is_prime, LinearCode};
use crate::error::{Error, Result};
use crate::quadrature::periodic_trapezoid;
use crate::stats::{kahan_sum, Estimate};

const QUAD_REL_TOL: f64 = 1e-8;
const QUAD_MAX_POINTS: usize = 1 << 22;
const CODEWORD_CAP: u64 = 1_000_000;

/// One-dimensional periodic Gaussian density f_{sigma, period Z}(y).
pub fn periodic_density_1d(y: f64, period: f64, sigma: f64) -> f64 {
    log_periodic_density_1d(y, period, sigma).exp()
}

/// log f_{sigma, period Z}(y), factored around the nearest replica so narrow
/// spikes at small sigma never underflow to -inf.
pub fn log_periodic_density_1d(y: f64, period: f64, sigma: f64) -> f64 {
    let r = y.rem_euclid(period);
    let halfwidth = ((10.0 * sigma + 2.0 * period) / period).ceil() as i64;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let nearest = r - period * (r / period).round();
    let peak = nearest * nearest * inv;
    let mut sum = 0.0;
    for k in -halfwidth..=halfwidth {
        let d = r - k as f64 * period;
        sum += (-(d * d * inv - peak)).exp();
    }
    sum.ln() - peak - ((2.0 * std::f64::consts::PI).sqrt() * sigma).ln()
}

/// The scalar mod-(alpha Z)/(alpha p Z) channel with Gaussian noise: input a
/// coset of alpha Z in [0, alpha p), output the noisy input folded back into
/// the coarse cell. The channel is regular, so uniform input is optimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModChannelSpec {
    pub alpha: f64,
    pub p: u64,
    pub sigma: f64,
}

impl ModChannelSpec {
    pub fn new(alpha: f64, p: u64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if !is_prime(p) {
            return Err(Error::InvalidParameter(format!("{p} is not prime")));
        }
        if !(sigma > 0.0) {
            return Err(Error::NonPositiveSigma(sigma));
        }
        Ok(ModChannelSpec { alpha, p, sigma })
    }

    /// Coarse period alpha p.
    pub fn period(&self) -> f64 {
        self.alpha * self.p as f64
    }

    /// Transition density W_x(y) = f_{sigma, coarse}(y - alpha x).
    pub fn transition(&self, x: u64, y: f64) -> f64 {
        self.log_transition(x, y).exp()
    }

    pub fn log_transition(&self, x: u64, y: f64) -> f64 {
        log_periodic_density_1d(y - self.alpha * x as f64, self.period(), self.sigma)
    }

    /// Output density under uniform input, (1/p) f_{sigma, fine}(y).
    pub fn uniform_output(&self, y: f64) -> f64 {
        self.log_uniform_output(y).exp()
    }

    pub fn log_uniform_output(&self, y: f64) -> f64 {
        log_periodic_density_1d(y, self.alpha, self.sigma) - (self.p as f64).ln()
    }

    /// Capacity C(fine/coarse, sigma^2) by deterministic quadrature of the
    /// divergence form.
    pub fn capacity(&self) -> Result<f64> {
        let period = self.period();
        let mut f = |y: f64| {
            let lw = self.log_transition(0, y);
            lw.exp() * (lw - self.log_uniform_output(y))
        };
        periodic_trapezoid(&mut f, 0.0, period, QUAD_REL_TOL, QUAD_MAX_POINTS)
    }
}

/// Renyi entropy H_{1+rho}(p) = -(1/rho) log sum p_a^(1+rho), in nats.
pub fn renyi_entropy(pmf: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidParameter(format!("rho must lie in (0, 1], got {rho}")));
    }
    if pmf.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidDistribution("negative mass".into()));
    }
    let total = kahan_sum(pmf.iter().copied());
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("pmf sums to {total}")));
    }
    let s = kahan_sum(pmf.iter().map(|&v| v.powf(1.0 + rho)));
    Ok(-s.ln() / rho)
}

fn psi_unchecked(spec: &ModChannelSpec, rho: f64) -> Result<f64> {
    let period = spec.period();
    let p = spec.p as f64;
    // per-coset integrals; regularity makes them equal, and averaging them
    // implements the defining sum over inputs literally
    let mut total = 0.0;
    for x in 0..spec.p {
        let mut f = |y: f64| {
            // w^(1+rho) q^(-rho), computed in log space for stability
            ((1.0 + rho) * spec.log_transition(x, y) - rho * spec.log_uniform_output(y)).exp()
        };
        total += periodic_trapezoid(&mut f, 0.0, period, QUAD_REL_TOL, QUAD_MAX_POINTS)?;
    }
    Ok((total / p).ln())
}

/// psi(rho | W, uniform input) for the mod channel, by quadrature over the
/// coarse cell and the explicit coset sum.
pub fn psi(spec: &ModChannelSpec, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho must lie in [0, 1], got {rho}")));
    }
    psi_unchecked(spec, rho)
}

/// Second derivative of psi at zero in its variance form, cross-checkable
/// against finite differences of `psi`.
pub fn psi_curvature_at_zero(spec: &ModChannelSpec) -> Result<f64> {
    let period = spec.period();
    let p = spec.p as f64;
    let mut a_total = 0.0;
    let mut b_total = 0.0;
    for x in 0..spec.p {
        let mut fa = |y: f64| {
            let lw = spec.log_transition(x, y);
            let l = lw - spec.log_uniform_output(y);
            lw.exp() * l * l
        };
        let mut fb = |y: f64| {
            let lw = spec.log_transition(x, y);
            lw.exp() * (lw - spec.log_uniform_output(y))
        };
        a_total += periodic_trapezoid(&mut fa, 0.0, period, QUAD_REL_TOL, QUAD_MAX_POINTS)?;
        b_total += periodic_trapezoid(&mut fb, 0.0, period, QUAD_REL_TOL, QUAD_MAX_POINTS)?;
    }
    let a = a_total / p;
    let b = b_total / p;
    Ok(a - b * b)
}

/// Central finite-difference estimate of psi''(0) at step h. The integrand
/// extends smoothly to small negative rho, which keeps the stencil centered.
pub fn psi_curvature_finite_difference(spec: &ModChannelSpec, h: f64) -> Result<f64> {
    let plus = psi_unchecked(spec, h)?;
    let minus = psi_unchecked(spec, -h)?;
    Ok((plus + minus) / (h * h))
}

/// Rate and volume-to-noise bookkeeping for a target lattice volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateGap {
    /// gamma = V^(2/n) / sigma^2.
    pub gamma: f64,
    /// delta0 = (1/2) log(2 pi e / gamma).
    pub delta0: f64,
    /// Code rate (1/n) log(alpha^n p^n / V) in nats per symbol.
    pub rate: f64,
    /// C(fine/coarse, sigma^2) in nats.
    pub capacity: f64,
    /// Whether rate > capacity.
    pub rate_condition_met: bool,
}

/// delta0 and the rate condition for a code whose Construction-A lattice has
/// volume `v_target`.
pub fn rate_gap(spec: &ModChannelSpec, n: usize, v_target: f64) -> Result<RateGap> {
    if !(v_target > 0.0) {
        return Err(Error::InvalidParameter("V target must be positive".into()));
    }
    let nf = n as f64;
    let gamma = v_target.powf(2.0 / nf) / (spec.sigma * spec.sigma);
    let delta0 = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E / gamma).ln();
    let rate = (spec.period()).ln() - v_target.ln() / nf;
    let capacity = spec.capacity()?;
    Ok(RateGap { gamma, delta0, rate, capacity, rate_condition_met: rate > capacity })
}

/// Divergence between the channel output driven by a code and by uniform
/// input, as the chain-rule capacity difference
/// D = C(Lambda, sigma^2) - C(fine^n, sigma^2), estimated with common
/// Gaussian draws for both log-densities. The Construction-A coset structure
/// turns each n-dimensional density into per-coordinate tables plus a sum
/// over codewords.
pub fn resolvability_divergence<R: Rng + ?Sized>(
    spec: &ModChannelSpec,
    n: usize,
    code: &LinearCode,
    samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    if code.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: code.n() });
    }
    if code.p() != spec.p {
        return Err(Error::InvalidParameter(format!(
            "code field {} does not match channel p {}",
            code.p(),
            spec.p
        )));
    }
    if !code.is_full_rank() {
        return Err(Error::RankDeficientCode);
    }
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let words = code.codewords(CODEWORD_CAP)?;
    let k = code.k();
    let p = spec.p as usize;
    let period = spec.period();
    let log_const = (n - k) as f64 * (spec.p as f64).ln();

    let mut vals = Vec::with_capacity(samples as usize);
    let mut tables = vec![0.0f64; n * p];
    let mut w = vec![0.0f64; n];
    for _ in 0..samples {
        for wi in w.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *wi = spec.sigma * g;
        }
        // fine product density log f_{sigma, (alpha Z)^n}(w)
        let mut log_ff = 0.0;
        for &wi in &w {
            log_ff += log_periodic_density_1d(wi, spec.alpha, spec.sigma);
        }
        // per-coordinate log densities against each coarse coset shift
        for (i, &wi) in w.iter().enumerate() {
            for d in 0..p {
                tables[i * p + d] =
                    log_periodic_density_1d(wi - spec.alpha * d as f64, period, spec.sigma);
            }
        }
        // log f_{sigma, Lambda}(w) = logsumexp over codewords of the
        // coordinate table sums
        let mut max_term = f64::NEG_INFINITY;
        let mut terms = Vec::with_capacity(words.len());
        for word in &words {
            let mut s = 0.0;
            for (i, &d) in word.iter().enumerate() {
                s += tables[i * p + d as usize];
            }
            terms.push(s);
            if s > max_term {
                max_term = s;
            }
        }
        let log_fl = max_term
            + kahan_sum(terms.iter().map(|&s| (s - max_term).exp())).ln();
        vals.push(log_const + log_fl - log_ff);
    }
    Ok(Estimate::from_samples(&vals))
}

/// One resolvability experiment row: a code, its rate, and the estimated
/// divergence.
#[derive(Debug, Clone)]
pub struct ResolvabilityRun {
    pub n: usize,
    pub code: LinearCode,
    pub rate: f64,
    pub delta0: f64,
    pub divergence: Estimate,
}

impl ResolvabilityRun {
    pub fn execute<R: Rng + ?Sized>(
        spec: &ModChannelSpec,
        n: usize,
        code: LinearCode,
        samples: u64,
        rng: &mut R,
    ) -> Result<Self> {
        let divergence = resolvability_divergence(spec, n, &code, samples, rng)?;
        let v = spec.alpha.powi(n as i32) * (spec.p as f64).powi((n - code.k()) as i32);
        let gap = rate_gap(spec, n, v)?;
        Ok(ResolvabilityRun { n, code, rate: gap.rate, delta0: gap.delta0, divergence })
    }
}
