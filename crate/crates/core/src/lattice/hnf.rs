//! Column-style Hermite normal form over the integers.
//!
//! Used to canonicalize integer generating sets: the columns of the output
//! generate the same sublattice of Z^n as the input columns, and the output
//! is lower triangular with a positive diagonal. The quotient Z^n / H Z^n is
//! then enumerated by the box prod_i [0, h_ii).

use crate::error::{Error, Result};

fn div_round(a: i64, b: i64) -> i64 {
    let q = a.div_euclid(b);
    let r = a.rem_euclid(b);
    // move the quotient toward the multiple of b nearest to a; the step
    // direction depends on the sign of b
    if 2 * r > b.abs() {
        q + b.signum()
    } else {
        q
    }
}

pub(crate) fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Reduces `cols` (each of length `n`) to a lower-triangular basis of the
/// sublattice they generate. Fails if the columns do not span rank n.
pub(crate) fn column_hnf(mut cols: Vec<Vec<i64>>, n: usize) -> Result<Vec<Vec<i64>>> {
    let m = cols.len();
    if m < n {
        return Err(Error::RankDeficientCode);
    }
    for i in 0..n {
        loop {
            // pivot: column with the smallest nonzero entry in row i
            let mut pivot: Option<usize> = None;
            for (j, col) in cols.iter().enumerate().take(m).skip(i) {
                if col[i] != 0
                    && pivot.is_none_or(|pj| col[i].abs() < cols[pj][i].abs())
                {
                    pivot = Some(j);
                }
            }
            let Some(pj) = pivot else {
                return Err(Error::RankDeficientCode);
            };
            cols.swap(i, pj);
            let mut all_zero = true;
            for j in i + 1..m {
                if cols[j][i] != 0 {
                    let q = div_round(cols[j][i], cols[i][i]);
                    for row in 0..n {
                        cols[j][row] -= q * cols[i][row];
                    }
                    if cols[j][i] != 0 {
                        all_zero = false;
                    }
                }
            }
            if all_zero {
                break;
            }
        }
        if cols[i][i] < 0 {
            for row in 0..n {
                cols[i][row] = -cols[i][row];
            }
        }
        // normalize earlier columns so row i lies in [0, h_ii)
        for j in 0..i {
            let q = floor_div(cols[j][i], cols[i][i]);
            if q != 0 {
                for row in 0..n {
                    cols[j][row] -= q * cols[i][row];
                }
            }
        }
    }
    cols.truncate(n);
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hnf_of_scaled_identity() {
        let cols = vec![vec![2, 0], vec![0, 2]];
        let h = column_hnf(cols, 2).unwrap();
        assert_eq!(h, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn hnf_reduces_redundant_generators() {
        // columns (2,0), (0,2), (1,1) generate the checkerboard lattice D2
        let cols = vec![vec![2, 0], vec![0, 2], vec![1, 1]];
        let h = column_hnf(cols, 2).unwrap();
        let det: i64 = h[0][0] * h[1][1];
        assert_eq!(det, 2);
        assert_eq!(h[1][0], 0, "column 1 must have no entry above the diagonal");
    }

    #[test]
    fn hnf_detects_rank_deficiency() {
        let cols = vec![vec![1, 2], vec![2, 4]];
        assert!(matches!(column_hnf(cols, 2), Err(Error::RankDeficientCode)));
    }

    #[test]
    fn div_round_minimizes_remainder_for_all_signs() {
        for a in -25i64..=25 {
            for b in [-7i64, -4, -3, -1, 1, 2, 5, 7] {
                let q = div_round(a, b);
                let r = a - q * b;
                assert!(
                    2 * r.abs() <= b.abs(),
                    "a={a} b={b} q={q} leaves remainder {r}"
                );
            }
        }
    }

    #[test]
    fn hnf_handles_mixed_sign_generators() {
        // regression: a negative intermediate pivot must not stall elimination
        let cols = vec![
            vec![3, -4, 7, 1],
            vec![-5, 2, -9, 6],
            vec![8, -1, 4, -3],
            vec![2, 6, -7, 5],
            vec![11, 0, 0, 0],
            vec![0, 11, 0, 0],
            vec![0, 0, 11, 0],
            vec![0, 0, 0, 11],
        ];
        let h = column_hnf(cols, 4).unwrap();
        for (j, col) in h.iter().enumerate() {
            assert!(col[j] > 0);
            for row in 0..j {
                assert_eq!(col[row], 0);
            }
        }
    }
}
