//! Linear codes over a prime field F_p, in column-generator form: the code is
//! the column span of an n-by-k generator matrix. Used both for Construction-A
//! lattices and for resolvability experiments.

use rand::Rng;

use crate::error::{Error, Result};

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p.is_multiple_of(2) {
        return p == 2;
    }
    let mut d = 3u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// An (n, k) linear code over F_p given by generator columns.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LinearCode {
    p: u64,
    n: usize,
    /// k generator columns, each of length n, entries in [0, p).
    columns: Vec<Vec<u64>>,
}

impl LinearCode {
    pub fn new(p: u64, n: usize, columns: Vec<Vec<u64>>) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidParameter(format!("{p} is not prime")));
        }
        if columns.iter().any(|c| c.len() != n || c.iter().any(|&v| v >= p)) {
            return Err(Error::InvalidParameter(
                "generator columns must have length n with entries in [0, p)".into(),
            ));
        }
        Ok(LinearCode { p, n, columns })
    }

    /// The trivial (n, 0) code {0}.
    pub fn zero(p: u64, n: usize) -> Result<Self> {
        LinearCode::new(p, n, Vec::new())
    }

    /// Uniformly random generator columns (not necessarily full rank).
    pub fn random<R: Rng + ?Sized>(p: u64, n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidParameter(format!("{p} is not prime")));
        }
        let columns = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(0..p)).collect())
            .collect();
        LinearCode::new(p, n, columns)
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<u64>] {
        &self.columns
    }

    /// Code with the first k columns of this generator.
    pub fn prefix(&self, k: usize) -> LinearCode {
        assert!(k <= self.k());
        LinearCode { p: self.p, n: self.n, columns: self.columns[..k].to_vec() }
    }

    /// Generator entries row-major (n rows of k digits).
    pub fn row_major_digits(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.n * self.k());
        for row in 0..self.n {
            for col in &self.columns {
                out.push(col[row]);
            }
        }
        out
    }

    pub fn from_row_major_digits(p: u64, n: usize, k: usize, digits: &[u64]) -> Result<Self> {
        if digits.len() != n * k {
            return Err(Error::InvalidParameter(format!(
                "expected {} digits, got {}",
                n * k,
                digits.len()
            )));
        }
        let mut columns = vec![vec![0u64; n]; k];
        for row in 0..n {
            for (col, column) in columns.iter_mut().enumerate() {
                column[row] = digits[row * k + col];
            }
        }
        LinearCode::new(p, n, columns)
    }

    /// Rank of the generator over F_p by Gaussian elimination.
    pub fn rank(&self) -> usize {
        let p = self.p as i128;
        let mut m: Vec<Vec<i128>> = (0..self.n)
            .map(|r| self.columns.iter().map(|c| c[r] as i128).collect())
            .collect();
        let rows = self.n;
        let cols = self.k();
        let mut rank = 0usize;
        for col in 0..cols {
            let Some(pivot) = (rank..rows).find(|&r| m[r][col] % p != 0) else {
                continue;
            };
            m.swap(rank, pivot);
            let inv = mod_inverse(m[rank][col].rem_euclid(p), p);
            for c in col..cols {
                m[rank][c] = (m[rank][c] * inv).rem_euclid(p);
            }
            for r in 0..rows {
                if r != rank && m[r][col] % p != 0 {
                    let f = m[r][col].rem_euclid(p);
                    for c in col..cols {
                        m[r][c] = (m[r][c] - f * m[rank][c]).rem_euclid(p);
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.k()
    }

    /// Number of codewords p^k, or None on overflow.
    pub fn size(&self) -> Option<u64> {
        self.p.checked_pow(self.k() as u32)
    }

    /// All codewords as digit vectors, message-index order. The message index
    /// enumerates F_p^k in mixed radix with the first generator column as the
    /// fastest digit.
    pub fn codewords(&self, cap: u64) -> Result<Vec<Vec<u64>>> {
        let size = self
            .size()
            .ok_or(Error::EnumerationTooLarge { count: u128::MAX, limit: cap })?;
        if size > cap {
            return Err(Error::EnumerationTooLarge { count: size as u128, limit: cap });
        }
        let mut words = Vec::with_capacity(size as usize);
        let mut current = vec![0u64; self.n];
        let mut message = vec![0u64; self.k()];
        loop {
            words.push(current.clone());
            // increment the mixed-radix message and update the codeword
            let mut carry_col = 0usize;
            loop {
                if carry_col == self.k() {
                    return Ok(words);
                }
                message[carry_col] += 1;
                for (row, val) in current.iter_mut().enumerate() {
                    *val = (*val + self.columns[carry_col][row]) % self.p;
                }
                if message[carry_col] < self.p {
                    break;
                }
                // roll this digit back to zero: adding the column p times is a
                // no-op mod p, so the codeword is already correct
                message[carry_col] = 0;
                carry_col += 1;
            }
        }
    }
}

fn mod_inverse(a: i128, p: i128) -> i128 {
    // extended Euclid; p prime and a nonzero mod p
    let (mut t, mut new_t) = (0i128, 1i128);
    let (mut r, mut new_r) = (p, a);
    while new_r != 0 {
        let q = r / new_r;
        (t, new_t) = (new_t, t - q * new_t);
        (r, new_r) = (new_r, r - q * new_r);
    }
    t.rem_euclid(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn primality() {
        assert!(is_prime(2) && is_prime(3) && is_prime(11) && is_prime(97));
        assert!(!is_prime(1) && !is_prime(9) && !is_prime(91));
    }

    #[test]
    fn rank_of_identity_prefix() {
        let code = LinearCode::new(5, 3, vec![vec![1, 0, 0], vec![0, 1, 0]]).unwrap();
        assert_eq!(code.rank(), 2);
        assert!(code.is_full_rank());
        let dependent = LinearCode::new(5, 2, vec![vec![1, 2], vec![2, 4]]).unwrap();
        assert_eq!(dependent.rank(), 1);
    }

    #[test]
    fn codeword_enumeration() {
        let code = LinearCode::new(3, 2, vec![vec![1, 2]]).unwrap();
        let words = code.codewords(100).unwrap();
        assert_eq!(words, vec![vec![0, 0], vec![1, 2], vec![2, 1]]);
    }

    #[test]
    fn codeword_count_matches_size() {
        let mut rng = stream(3, 0, 0);
        let code = LinearCode::random(3, 4, 2, &mut rng).unwrap();
        let words = code.codewords(1000).unwrap();
        assert_eq!(words.len(), 9);
        // all distinct when full rank
        if code.is_full_rank() {
            let mut sorted = words.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), 9);
        }
    }

    #[test]
    fn row_major_round_trip() {
        let mut rng = stream(4, 0, 0);
        let code = LinearCode::random(11, 4, 3, &mut rng).unwrap();
        let digits = code.row_major_digits();
        let back = LinearCode::from_row_major_digits(11, 4, 3, &digits).unwrap();
        assert_eq!(code, back);
    }
}
