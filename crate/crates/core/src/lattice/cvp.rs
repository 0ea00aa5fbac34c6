//! Exact closest-point search and ball enumeration on the QR factor of the
//! basis (Schnorr-Euchner depth-first order, Babai point first).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Upper-triangular factor of a lattice basis, flattened row-major, with a
/// positive diagonal. `||B(z-t)|| = ||R(z-t)||` for all integer z.
#[derive(Debug, Clone)]
pub(crate) struct EnumContext {
    n: usize,
    r: Vec<f64>,
}

impl EnumContext {
    pub fn new(basis: &DMatrix<f64>) -> Self {
        let n = basis.nrows();
        let qr = basis.clone().qr();
        let mut rm = qr.r();
        // flip rows so the diagonal is positive; an orthogonal row scaling
        // leaves all norms unchanged
        for i in 0..n {
            if rm[(i, i)] < 0.0 {
                for j in 0..n {
                    rm[(i, j)] = -rm[(i, j)];
                }
            }
        }
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                r[i * n + j] = rm[(i, j)];
            }
        }
        EnumContext { n, r }
    }

    #[inline]
    fn r(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n + j]
    }

    /// Closest integer coordinate vector to the real coordinates `t`,
    /// i.e. argmin over z of ||R(z-t)||^2. Ties within a relative 1e-12 band
    /// go to the lexicographically smallest z.
    pub fn closest(&self, t: &[f64]) -> (Vec<i64>, f64) {
        debug_assert_eq!(t.len(), self.n);
        let mut search = Closest {
            ctx: self,
            t,
            z: vec![0i64; self.n],
            best_z: Vec::new(),
            best_d2: f64::INFINITY,
        };
        search.descend(self.n, 0.0);
        let d2 = search.best_d2;
        (search.best_z, d2)
    }

    /// Visits every integer vector z with ||R(z-t)||^2 <= radius2, in
    /// depth-first order. Returns the number of visited points.
    pub fn for_each_in_ball(
        &self,
        t: &[f64],
        radius2: f64,
        max_points: u64,
        visit: &mut dyn FnMut(&[i64], f64),
    ) -> Result<u64> {
        debug_assert_eq!(t.len(), self.n);
        let mut ball = Ball {
            ctx: self,
            t,
            // small slack so boundary points are not lost to rounding
            radius2: radius2 * (1.0 + 1e-12) + 1e-300,
            max_points,
            count: 0,
            z: vec![0i64; self.n],
            visit,
        };
        ball.descend(self.n, 0.0)?;
        Ok(ball.count)
    }
}

fn lex_less(a: &[i64], b: &[i64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

struct Closest<'a> {
    ctx: &'a EnumContext,
    t: &'a [f64],
    z: Vec<i64>,
    best_z: Vec<i64>,
    best_d2: f64,
}

impl Closest<'_> {
    fn tie_tol(&self) -> f64 {
        if self.best_d2.is_finite() {
            1e-12 * (1.0 + self.best_d2)
        } else {
            0.0
        }
    }

    fn descend(&mut self, level: usize, acc: f64) {
        if level == 0 {
            if acc < self.best_d2 - self.tie_tol() {
                self.best_d2 = acc;
                self.best_z = self.z.clone();
            } else if acc <= self.best_d2 + self.tie_tol()
                && (self.best_z.is_empty() || lex_less(&self.z, &self.best_z))
            {
                self.best_d2 = self.best_d2.min(acc);
                self.best_z = self.z.clone();
            }
            return;
        }
        let i = level - 1;
        let n = self.ctx.n;
        let rii = self.ctx.r(i, i);
        let mut s = 0.0;
        for j in i + 1..n {
            s += self.ctx.r(i, j) * (self.z[j] as f64 - self.t[j]);
        }
        let c = self.t[i] - s / rii;
        let z0 = c.round() as i64;
        let dir: i64 = if c - z0 as f64 >= 0.0 { 1 } else { -1 };
        // offsets 0, d, -d, 2d, -2d, ... visit zi in order of increasing
        // |zi - c|, so the first offset past the pruning bound ends the loop
        let mut k = 0i64;
        loop {
            let magnitude = (k + 1) / 2;
            let offset = if k == 0 {
                0
            } else if k % 2 == 1 {
                dir * magnitude
            } else {
                -dir * magnitude
            };
            let zi = z0 + offset;
            let w = rii * (zi as f64 - c);
            let contrib = w * w;
            if acc + contrib > self.best_d2 + self.tie_tol() {
                break;
            }
            self.z[i] = zi;
            self.descend(i, acc + contrib);
            k += 1;
        }
    }
}

struct Ball<'a> {
    ctx: &'a EnumContext,
    t: &'a [f64],
    radius2: f64,
    max_points: u64,
    count: u64,
    z: Vec<i64>,
    visit: &'a mut dyn FnMut(&[i64], f64),
}

impl Ball<'_> {
    fn descend(&mut self, level: usize, acc: f64) -> Result<()> {
        if level == 0 {
            self.count += 1;
            if self.count > self.max_points {
                return Err(Error::EnumerationTooLarge {
                    count: self.count as u128,
                    limit: self.max_points,
                });
            }
            (self.visit)(&self.z, acc);
            return Ok(());
        }
        let i = level - 1;
        let n = self.ctx.n;
        let rii = self.ctx.r(i, i);
        let mut s = 0.0;
        for j in i + 1..n {
            s += self.ctx.r(i, j) * (self.z[j] as f64 - self.t[j]);
        }
        let c = self.t[i] - s / rii;
        let bound = ((self.radius2 - acc).max(0.0)).sqrt() / rii;
        let lo = (c - bound).ceil() as i64;
        let hi = (c + bound).floor() as i64;
        for zi in lo..=hi {
            let w = rii * (zi as f64 - c);
            let contrib = w * w;
            if acc + contrib <= self.radius2 {
                self.z[i] = zi;
                self.descend(i, acc + contrib)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn closest_on_z2() {
        let b = dmatrix![1.0, 0.0; 0.0, 1.0];
        let ctx = EnumContext::new(&b);
        let (z, d2) = ctx.closest(&[0.6, -1.2]);
        assert_eq!(z, vec![1, -1]);
        assert!((d2 - (0.16 + 0.04)).abs() < 1e-12);
    }

    #[test]
    fn closest_tie_breaks_lexicographically() {
        let b = dmatrix![1.0];
        let ctx = EnumContext::new(&b);
        let (z, _) = ctx.closest(&[0.5]);
        assert_eq!(z, vec![0]);
        let (z, _) = ctx.closest(&[-0.5]);
        assert_eq!(z, vec![-1]);
    }

    #[test]
    fn ball_enumeration_counts_z2() {
        let b = dmatrix![1.0, 0.0; 0.0, 1.0];
        let ctx = EnumContext::new(&b);
        let mut pts = Vec::new();
        ctx.for_each_in_ball(&[0.0, 0.0], 1.0 + 1e-9, 10_000, &mut |z, _| {
            pts.push(z.to_vec());
        })
        .unwrap();
        // origin plus the four unit neighbors
        assert_eq!(pts.len(), 5);
    }

    #[test]
    fn ball_cap_is_enforced() {
        let b = dmatrix![1.0, 0.0; 0.0, 1.0];
        let ctx = EnumContext::new(&b);
        let err = ctx
            .for_each_in_ball(&[0.0, 0.0], 100.0, 10, &mut |_, _| {})
            .unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }
}
