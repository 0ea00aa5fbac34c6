//! Deterministic quadrature: adaptive Simpson on an interval or box, and a
//! doubling trapezoid rule for smooth periodic integrands (spectrally
//! accurate over a full period).

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 48;

fn simpson(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), fa, fm, fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || (b - a) < 1e-14 {
        return Ok(left + right + delta / 15.0);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure(format!(
            "adaptive Simpson did not converge on [{a}, {b}]"
        )));
    }
    let l = adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?;
    let r = adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?;
    Ok(l + r)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance.
pub fn adaptive_simpson(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
) -> Result<f64> {
    if !(b > a) {
        return Err(Error::InvalidParameter("empty integration interval".into()));
    }
    let (whole, fa, fm, fb) = simpson(f, a, b);
    adapt(f, a, b, fa, fm, fb, whole, abs_tol, 0)
}

/// Adaptive Simpson over an axis-aligned box, by nesting one level per axis.
/// Practical for up to three dimensions.
pub fn adaptive_box(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    assert_eq!(lo.len(), hi.len());
    let dim = lo.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("zero-dimensional box".into()));
    }
    fn inner(
        f: &dyn Fn(&[f64]) -> f64,
        lo: &[f64],
        hi: &[f64],
        axis: usize,
        point: &mut [f64],
        tol: f64,
    ) -> Result<f64> {
        let last = axis + 1 == lo.len();
        let mut g = |x: f64| -> f64 {
            point[axis] = x;
            if last {
                f(point)
            } else {
                let mut p = point.to_vec();
                inner(f, lo, hi, axis + 1, &mut p, tol / (hi[axis] - lo[axis]).max(1.0))
                    .unwrap_or(f64::NAN)
            }
        };
        adaptive_simpson(&mut g, lo[axis], hi[axis], tol)
    }
    let mut point = vec![0.0; dim];
    let out = inner(f, lo, hi, 0, &mut point, abs_tol)?;
    if !out.is_finite() {
        return Err(Error::QuadratureFailure("inner integral did not converge".into()));
    }
    Ok(out)
}

/// Trapezoid rule over one full period of a smooth periodic integrand,
/// doubling the node count until two successive refinements agree to
/// `rel_tol`. Converges spectrally for analytic periodic functions.
pub fn periodic_trapezoid(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_points: usize,
) -> Result<f64> {
    if !(b > a) {
        return Err(Error::InvalidParameter("empty integration interval".into()));
    }
    let mut m = 16usize;
    let h = (b - a) / m as f64;
    let mut sum = 0.0;
    for i in 0..m {
        sum += f(a + (i as f64 + 0.5) * h);
    }
    let mut prev = sum * h;
    loop {
        m *= 2;
        let h = (b - a) / m as f64;
        let mut sum = 0.0;
        for i in 0..m {
            sum += f(a + (i as f64 + 0.5) * h);
        }
        let cur = sum * h;
        let scale = cur.abs().max(1e-300);
        if (cur - prev).abs() <= rel_tol * scale {
            return Ok(cur);
        }
        if m >= max_points {
            return Err(Error::QuadratureFailure(format!(
                "periodic rule did not reach rel_tol {rel_tol} within {max_points} points"
            )));
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_integrates_polynomial() {
        let v = adaptive_simpson(&mut |x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn simpson_integrates_gaussian() {
        let v = adaptive_simpson(
            &mut |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt(),
            -10.0,
            10.0,
            1e-12,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn box_rule_matches_product() {
        let v = adaptive_box(&|p: &[f64]| p[0] * p[1], &[0.0, 0.0], &[1.0, 2.0], 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
    }

    #[test]
    fn periodic_rule_is_spectral() {
        let v = periodic_trapezoid(
            &mut |x: f64| (x.sin()).exp(),
            0.0,
            2.0 * PI,
            1e-13,
            1 << 20,
        )
        .unwrap();
        // 2*pi*I_0(1), modified Bessel
        let expected = 2.0 * PI * 1.2660658777520084;
        assert!((v - expected).abs() < 1e-9 * expected);
    }
}
