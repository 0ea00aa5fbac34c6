//! Theta series, the L-infinity / L1 / KL flatness factors, smoothing
//! parameters, and mod-lattice channel capacities.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::PeriodicGaussian;
use crate::lattice::{nesting_coordinates, Lattice};
use crate::quadrature::{adaptive_box, adaptive_simpson};
use crate::stats::{kahan_sum, Estimate};

const ENUM_CAP: u64 = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Linf,
    L1,
    Kl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMethod {
    Theta,
    DualTheta,
    Quadrature,
    MonteCarlo,
}

/// A flatness-factor estimate together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub metric: Metric,
    pub sigma: f64,
    pub vnr: f64,
    pub value: f64,
    /// 0 for deterministic methods.
    pub ci_halfwidth: f64,
    pub method: EstimationMethod,
    pub samples: u64,
}

/// Theta series Theta_L(tau) = sum over lattice points of exp(-pi tau ||x||^2),
/// truncated with relative tail below `rel_tol`. Always at least 1.
pub fn theta_series(lattice: &Lattice, tau: f64, rel_tol: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(1.0 + theta_series_minus_one(lattice, tau, rel_tol)?)
}

/// Theta_L(tau) - 1, summed directly over nonzero points so no cancellation
/// occurs when the series is close to 1.
pub fn theta_series_minus_one(lattice: &Lattice, tau: f64, rel_tol: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let n = lattice.dimension();
    let sigma_eff = 1.0 / (2.0 * std::f64::consts::PI * tau).sqrt();
    // shortest nonzero vector is at most the smallest basis column
    let bmin = (0..n)
        .map(|j| lattice.basis().column(j).norm())
        .fold(f64::INFINITY, f64::min);
    let s = (2.0 * ((1.0 / rel_tol).ln() + n as f64 * 3f64.ln() + 6.0)).sqrt();
    let radius = bmin + s * sigma_eff;
    let scale = std::f64::consts::PI * tau;
    let mut terms: Vec<f64> = Vec::new();
    let origin = DVector::zeros(n);
    lattice.for_each_in_ball(&origin, radius, ENUM_CAP, &mut |z, d2| {
        if z.iter().any(|&v| v != 0) {
            terms.push((-scale * d2).exp());
        }
    })?;
    terms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(kahan_sum(terms))
}

/// L-infinity flatness factor via the dual theta series,
/// eps = Theta_{L*}(2 pi sigma^2) - 1. This route sums the small deviation
/// directly and is preferred numerically.
pub fn linf_flatness(lattice: &Lattice, sigma: f64) -> Result<FlatnessReport> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let dual = lattice.dual();
    let tau = 2.0 * std::f64::consts::PI * sigma * sigma;
    let value = theta_series_minus_one(&dual, tau, 1e-14)?;
    Ok(FlatnessReport {
        metric: Metric::Linf,
        sigma,
        vnr: lattice.vnr(sigma)?,
        value,
        ci_halfwidth: 0.0,
        method: EstimationMethod::DualTheta,
        samples: 0,
    })
}

/// L-infinity flatness factor via the primal theta series,
/// eps = (vnr / 2 pi)^(n/2) Theta_L(1/(2 pi sigma^2)) - 1.
pub fn linf_flatness_primal(lattice: &Lattice, sigma: f64) -> Result<FlatnessReport> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let n = lattice.dimension() as f64;
    let gamma = lattice.vnr(sigma)?;
    let tau = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
    let theta = theta_series(lattice, tau, 1e-15)?;
    let c = ((0.5 * n) * (gamma / (2.0 * std::f64::consts::PI)).ln()).exp();
    Ok(FlatnessReport {
        metric: Metric::Linf,
        sigma,
        vnr: gamma,
        value: c * theta - 1.0,
        ci_halfwidth: 0.0,
        method: EstimationMethod::Theta,
        samples: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L1Method {
    Quadrature,
    MonteCarlo,
}

/// L1 flatness factor: integral over a fundamental region of
/// |f_{sigma,L} - 1/V|. Quadrature is supported for n <= 3; Monte Carlo
/// averages |V f(U) - 1| over uniform points of the parallelepiped.
pub fn l1_flatness<R: Rng + ?Sized>(
    lattice: &Lattice,
    sigma: f64,
    method: L1Method,
    budget: u64,
    rng: &mut R,
) -> Result<FlatnessReport> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let n = lattice.dimension();
    let vnr = lattice.vnr(sigma)?;
    match method {
        L1Method::Quadrature => {
            if n > 3 {
                return Err(Error::MethodUnsupported(format!(
                    "L1 quadrature supports n <= 3, got {n}"
                )));
            }
            let tol = if n == 1 { 1e-10 } else { 1e-8 };
            let value = l1_quadrature(lattice, sigma, tol)?;
            Ok(FlatnessReport {
                metric: Metric::L1,
                sigma,
                vnr,
                value: value.min(2.0),
                ci_halfwidth: tol,
                method: EstimationMethod::Quadrature,
                samples: 0,
            })
        }
        L1Method::MonteCarlo => {
            if budget < 2 {
                return Err(Error::InvalidParameter("Monte-Carlo budget too small".into()));
            }
            let v = lattice.volume();
            let log_v = v.ln();
            let density = PeriodicGaussian::new(lattice, sigma)?;
            let mut samples = Vec::with_capacity(budget as usize);
            let mut t = DVector::zeros(n);
            for _ in 0..budget {
                for i in 0..n {
                    t[i] = rng.random::<f64>();
                }
                let u = lattice.basis() * &t;
                let logf = density.log_density(&u)?;
                samples.push(((logf + log_v).exp() - 1.0).abs());
            }
            let est = Estimate::from_samples(&samples);
            // the true quantity is a total variation and never exceeds 2;
            // projecting the estimate onto the feasible range only helps
            Ok(FlatnessReport {
                metric: Metric::L1,
                sigma,
                vnr,
                value: est.value.min(2.0),
                ci_halfwidth: est.ci_halfwidth,
                method: EstimationMethod::MonteCarlo,
                samples: est.samples,
            })
        }
    }
}

fn l1_quadrature(lattice: &Lattice, sigma: f64, tol: f64) -> Result<f64> {
    let n = lattice.dimension();
    let v = lattice.volume();
    let density = PeriodicGaussian::new(lattice, sigma)?;
    // integrate |V f(B t) - 1| over the unit box of fractional coordinates
    let f = |t: &[f64]| -> f64 {
        let tv = DVector::from_column_slice(t);
        let u = lattice.basis() * tv;
        let logf = density
            .log_density(&u)
            .expect("density evaluation inside quadrature");
        ((logf + v.ln()).exp() - 1.0).abs()
    };
    if n == 1 {
        adaptive_simpson(&mut |t| f(&[t]), 0.0, 1.0, tol)
    } else {
        adaptive_box(&f, &vec![0.0; n], &vec![1.0; n], tol)
    }
}

fn kl_estimate<R: Rng + ?Sized>(
    lattice: &Lattice,
    sigma: f64,
    samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let n = lattice.dimension();
    let log_v = lattice.volume().ln();
    let density = PeriodicGaussian::new(lattice, sigma)?;
    let mut vals = Vec::with_capacity(samples as usize);
    let mut w = DVector::zeros(n);
    for _ in 0..samples {
        for i in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            w[i] = sigma * g;
        }
        vals.push(log_v + density.log_density(&w)?);
    }
    Ok(Estimate::from_samples(&vals))
}

/// KL flatness factor log V - h(f_{sigma,L}), with the differential entropy
/// estimated as the sample mean of -log f over folded Gaussian draws. The
/// log-density is evaluated analytically per sample, so the estimator is
/// unbiased up to truncation error; the reported value is projected onto
/// the nonnegative range a divergence lives in.
pub fn kl_flatness<R: Rng + ?Sized>(
    lattice: &Lattice,
    sigma: f64,
    samples: u64,
    rng: &mut R,
) -> Result<FlatnessReport> {
    if samples < 1000 {
        return Err(Error::InvalidParameter("kl_flatness needs at least 1000 samples".into()));
    }
    let est = kl_estimate(lattice, sigma, samples, rng)?;
    Ok(FlatnessReport {
        metric: Metric::Kl,
        sigma,
        vnr: lattice.vnr(sigma)?,
        value: est.value.max(0.0),
        ci_halfwidth: est.ci_halfwidth,
        method: EstimationMethod::MonteCarlo,
        samples: est.samples,
    })
}

/// Capacity C(L, sigma^2) = log V - h(f_{sigma,L}) of the mod-L channel,
/// identical to the KL flatness factor. Left unprojected so that capacity
/// differences (the chain rule) stay unbiased.
pub fn mod_lattice_capacity<R: Rng + ?Sized>(
    lattice: &Lattice,
    sigma: f64,
    samples: u64,
    rng: &mut R,
) -> Result<Estimate> {
    kl_estimate(lattice, sigma, samples, rng)
}

/// The two estimators of the mod-L/L' channel capacity.
#[derive(Debug, Clone, Copy)]
pub struct QuotientCapacity {
    /// C(coarse) - C(fine), each capacity estimated on its own sample set.
    pub chain: Estimate,
    /// Direct divergence form, on a third independent sample set.
    pub direct: Estimate,
}

/// Capacity of the mod-fine/coarse channel, computed both through the chain
/// rule and through the direct KL form. The two estimates use independent
/// draws so their agreement is a genuine consistency check.
pub fn quotient_capacity<R: Rng + ?Sized>(
    fine: &Lattice,
    coarse: &Lattice,
    sigma: f64,
    samples: u64,
    rng: &mut R,
) -> Result<QuotientCapacity> {
    let cols = nesting_coordinates(fine, coarse)?;
    let _ = cols;
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if fine.basis() == coarse.basis() {
        return Ok(QuotientCapacity {
            chain: Estimate::exact(0.0),
            direct: Estimate::exact(0.0),
        });
    }
    let c_coarse = mod_lattice_capacity(coarse, sigma, samples, rng)?;
    let c_fine = mod_lattice_capacity(fine, sigma, samples, rng)?;
    let chain = c_coarse.minus(c_fine);

    let n = fine.dimension();
    let index = (coarse.volume() / fine.volume()).round();
    let log_m = index.ln();
    let coarse_density = PeriodicGaussian::new(coarse, sigma)?;
    let fine_density = PeriodicGaussian::new(fine, sigma)?;
    let mut vals = Vec::with_capacity(samples as usize);
    let mut w = DVector::zeros(n);
    for _ in 0..samples {
        for i in 0..n {
            let g: f64 = StandardNormal.sample(rng);
            w[i] = sigma * g;
        }
        // both densities are periodic mod the coarse lattice, so the raw
        // Gaussian sample stands in for its reduction
        vals.push(log_m + coarse_density.log_density(&w)? - fine_density.log_density(&w)?);
    }
    let direct = Estimate::from_samples(&vals);
    Ok(QuotientCapacity { chain, direct })
}

/// Smallest sigma with flatness at most `eps_target`, by bisection on the
/// monotone decreasing flatness curve. L1 uses deterministic quadrature and
/// is supported in one dimension.
pub fn smoothing_parameter(lattice: &Lattice, eps_target: f64, metric: Metric) -> Result<f64> {
    if !(eps_target > 0.0) {
        return Err(Error::InvalidParameter("eps_target must be positive".into()));
    }
    let n = lattice.dimension();
    let eval: Box<dyn Fn(f64) -> Result<f64>> = match metric {
        Metric::Linf => Box::new(|s| Ok(linf_flatness(lattice, s)?.value)),
        Metric::L1 => {
            if n != 1 {
                return Err(Error::MethodUnsupported(
                    "L1 smoothing parameter uses quadrature and supports n = 1".into(),
                ));
            }
            Box::new(|s| l1_quadrature(lattice, s, 1e-10))
        }
        Metric::Kl => {
            return Err(Error::MethodUnsupported(
                "KL smoothing parameter is not provided; use Linf or L1".into(),
            ))
        }
    };
    let sigma0 = lattice.volume().powf(1.0 / n as f64) / (2.0 * std::f64::consts::PI).sqrt();
    let mut hi = sigma0;
    let mut grow = 0;
    while eval(hi)? > eps_target {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::NonBracketed { lo: sigma0, hi });
        }
    }
    let mut lo = hi / 2.0;
    let mut shrink = 0;
    while eval(lo)? <= eps_target {
        hi = lo;
        lo /= 2.0;
        shrink += 1;
        if shrink > 60 {
            return Err(Error::NonBracketed { lo, hi });
        }
    }
    // eval(lo) > target >= eval(hi); bisect to the stated tolerance
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid)?;
        if (v - eps_target).abs() <= 1e-6 * eps_target {
            return Ok(mid);
        }
        if v > eps_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) < 1e-15 * hi {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact flatness of the scaled integer lattice (alpha Z)^n via the
/// one-dimensional theta series, with the closed-form exponential bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZnFlatness {
    /// eps of the n-dimensional product lattice.
    pub value: f64,
    /// eps of the one-dimensional factor alpha Z.
    pub per_dim: f64,
    /// 4 exp(-2 pi^2 sigma^2 / alpha^2), the closed-form bound on `per_dim`.
    pub bound: f64,
}

pub fn zn_scaled_flatness(alpha: f64, sigma: f64, n: u32) -> Result<ZnFlatness> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    // dual form in one dimension: eps_{alpha Z}(sigma) = 2 sum_k exp(-2 pi^2 sigma^2 k^2 / alpha^2)
    let a = 2.0 * std::f64::consts::PI * std::f64::consts::PI * sigma * sigma / (alpha * alpha);
    let mut per_dim = 0.0;
    let mut k = 1u64;
    loop {
        let term = 2.0 * (-a * (k * k) as f64).exp();
        per_dim += term;
        if term < 1e-18 * per_dim.max(1e-300) || term == 0.0 {
            break;
        }
        k += 1;
        if k > 10_000 {
            return Err(Error::QuadratureFailure("1D theta series did not truncate".into()));
        }
    }
    // (1 + eps)^n - 1 evaluated without cancellation
    let value = (n as f64 * per_dim.ln_1p()).exp_m1();
    Ok(ZnFlatness { value, per_dim, bound: 4.0 * (-a).exp() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn theta_of_z_at_one() {
        let z = Lattice::integers(1);
        let v = theta_series(&z, 1.0, 1e-12).unwrap();
        // direct summation oracle: 1 + 2 sum exp(-pi k^2)
        let mut expected = 1.0;
        for k in 1..30 {
            expected += 2.0 * (-(std::f64::consts::PI) * (k * k) as f64).exp();
        }
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 1.0864348).abs() < 1e-7);
    }

    #[test]
    fn theta_product_and_scaling() {
        let z = Lattice::integers(1);
        let z2 = Lattice::integers(2);
        for &tau in &[0.5, 1.0, 2.0] {
            let t1 = theta_series(&z, tau, 1e-13).unwrap();
            let t2 = theta_series(&z2, tau, 1e-13).unwrap();
            assert!((t2 - t1 * t1).abs() < 1e-10 * t2);
        }
        let z_scaled = Lattice::scaled_integers(2.0, 1).unwrap();
        let a = theta_series(&z_scaled, 1.0, 1e-13).unwrap();
        let b = theta_series(&z, 4.0, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn linf_flatness_of_z() {
        let z = Lattice::integers(1);
        let r = linf_flatness(&z, 1.0).unwrap();
        let expected = 2.0 * (-2.0 * std::f64::consts::PI * std::f64::consts::PI).exp();
        assert!(((r.value - expected) / expected).abs() < 1e-3);
        // sigma = 1/sqrt(2 pi): eps = Theta_Z(1) - 1
        let s = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let r = linf_flatness(&z, s).unwrap();
        assert!((r.value - 0.0864348).abs() < 1e-6);
    }

    #[test]
    fn linf_primal_and_dual_agree() {
        let z2 = Lattice::integers(2);
        let a = linf_flatness(&z2, 0.7).unwrap().value;
        let b = linf_flatness_primal(&z2, 0.7).unwrap().value;
        assert!(((a - b) / a).abs() < 1e-10, "dual {a:e} primal {b:e}");
    }

    #[test]
    fn l1_below_linf_and_uniform_limit() {
        let z = Lattice::integers(1);
        let mut rng = stream(11, 0, 0);
        let r = l1_flatness(&z, 1.0, L1Method::Quadrature, 0, &mut rng).unwrap();
        assert!(r.value <= 5.4e-9 + 1e-10);
        let r = l1_flatness(&z, 10.0, L1Method::Quadrature, 0, &mut rng).unwrap();
        assert!(r.value < 1e-12);
    }

    #[test]
    fn l1_quadrature_matches_monte_carlo() {
        let z = Lattice::integers(1);
        let mut rng = stream(12, 0, 0);
        let q = l1_flatness(&z, 0.2, L1Method::Quadrature, 0, &mut rng).unwrap();
        let m = l1_flatness(&z, 0.2, L1Method::MonteCarlo, 40_000, &mut rng).unwrap();
        assert!(
            (q.value - m.value).abs() <= 3.0 * m.ci_halfwidth + q.ci_halfwidth,
            "quadrature {} vs MC {} +- {}",
            q.value,
            m.value,
            m.ci_halfwidth
        );
        assert!(q.value <= 2.0 && m.value <= 2.0);
    }

    #[test]
    fn l1_quadrature_dimension_cap() {
        let l = Lattice::integers(4);
        let mut rng = stream(13, 0, 0);
        let err = l1_flatness(&l, 1.0, L1Method::Quadrature, 0, &mut rng).unwrap_err();
        assert!(matches!(err, Error::MethodUnsupported(_)));
    }

    #[test]
    fn kl_flatness_values() {
        let mut rng = stream(14, 0, 0);
        let z = Lattice::integers(1);
        let r = kl_flatness(&z, 1.0, 5_000, &mut rng).unwrap();
        assert!(r.value <= 5.4e-9 + r.ci_halfwidth);

        let wide = Lattice::scaled_integers(10.0, 1).unwrap();
        let r = kl_flatness(&wide, 0.1, 20_000, &mut rng).unwrap();
        let expected = 10f64.ln()
            - 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.01).ln();
        assert!(
            (r.value - expected).abs() <= 3.0 * r.ci_halfwidth,
            "kl {} vs {} ci {}",
            r.value,
            expected,
            r.ci_halfwidth
        );
    }

    #[test]
    fn quotient_capacity_identical_lattices_is_zero() {
        let z = Lattice::integers(1);
        let mut rng = stream(15, 0, 0);
        let qc = quotient_capacity(&z, &z, 0.5, 2_000, &mut rng).unwrap();
        assert_eq!(qc.chain.value, 0.0);
        assert_eq!(qc.direct.value, 0.0);
    }

    #[test]
    fn quotient_capacity_noiseless_limit() {
        let fine = Lattice::integers(1);
        let coarse = Lattice::scaled_integers(2.0, 1).unwrap();
        let mut rng = stream(16, 0, 0);
        let qc = quotient_capacity(&fine, &coarse, 0.01, 4_000, &mut rng).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!(
            (qc.direct.value - ln2).abs() < 1e-3 + qc.direct.ci_halfwidth,
            "direct {} vs ln2",
            qc.direct.value
        );
    }

    #[test]
    fn smoothing_parameter_inverts_linf() {
        let z = Lattice::integers(1);
        let s = smoothing_parameter(&z, 0.0864348, Metric::Linf).unwrap();
        assert!((s - 0.398942).abs() < 1e-4, "sigma {s}");
        let s_small = smoothing_parameter(&z, 0.01, Metric::Linf).unwrap();
        let s_large = smoothing_parameter(&z, 0.5, Metric::Linf).unwrap();
        assert!(s_small > s_large, "smaller target needs larger sigma");
        // eta^1 <= eta^inf since eps1 <= eps_inf
        let s1 = smoothing_parameter(&z, 0.05, Metric::L1).unwrap();
        let sinf = smoothing_parameter(&z, 0.05, Metric::Linf).unwrap();
        assert!(s1 <= sinf + 1e-9);
    }

    #[test]
    fn zn_flatness_matches_one_dim() {
        let f = zn_scaled_flatness(0.5, 1.0, 1).unwrap();
        let l = Lattice::scaled_integers(0.5, 1).unwrap();
        let direct = linf_flatness(&l, 1.0).unwrap().value;
        assert!((f.value - direct).abs() <= 1e-12 * direct.max(1e-300) + 1e-300);
    }

    #[test]
    fn zn_flatness_product_vs_direct_theta() {
        let f = zn_scaled_flatness(1.0, 0.6, 4).unwrap();
        let l4 = Lattice::integers(4);
        let direct = linf_flatness(&l4, 0.6).unwrap().value;
        assert!(((f.value - direct) / direct).abs() < 1e-10);
    }

    #[test]
    fn zn_flatness_bound_holds() {
        for &ratio in &[0.5, 1.0, 2.0, 3.0] {
            let f = zn_scaled_flatness(1.0, ratio, 1).unwrap();
            assert!(f.per_dim <= f.bound, "ratio {ratio}: {} > {}", f.per_dim, f.bound);
        }
    }
}
