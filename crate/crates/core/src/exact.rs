//! Fraction-free (Bareiss) elimination over exact integers.
//!
//! Pivots are the first nonzero entry in row order; there is no magnitude
//! heuristic, so results are deterministic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Row-echelon form produced by Bareiss elimination.
#[derive(Debug, Clone)]
pub struct Echelon {
    pub rows: Vec<Vec<BigInt>>,
    /// Pivot column of each of the first `rank` rows.
    pub pivots: Vec<usize>,
    pub ncols: usize,
}

impl Echelon {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Brings `m` to row-echelon form with fraction-free updates
/// `a_ij ← (a_kk a_ij − a_ik a_kj) / prev`. Each division is exact.
pub fn bareiss(mut m: Vec<Vec<BigInt>>) -> Result<Echelon> {
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != ncols) {
        return Err(Error::invalid("ragged matrix"));
    }
    let mut prev = BigInt::one();
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == nrows {
            break;
        }
        let Some(p) = (r..nrows).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let (top, rest) = m.split_at_mut(r + 1);
        let pivot_row = &top[r];
        let pivot = pivot_row[col].clone();
        for row in rest.iter_mut() {
            if row[col].is_zero() {
                // a_ij ← a_kk a_ij / prev, still exact.
                for j in col + 1..ncols {
                    if !row[j].is_zero() {
                        let num = &pivot * &row[j];
                        row[j] = exact_div(num, &prev)?;
                    }
                }
                continue;
            }
            let factor = row[col].clone();
            for j in col + 1..ncols {
                let num = &pivot * &row[j] - &factor * &pivot_row[j];
                row[j] = exact_div(num, &prev)?;
            }
            row[col] = BigInt::zero();
        }
        prev = pivot;
        pivots.push(col);
        r += 1;
    }
    Ok(Echelon { rows: m, pivots, ncols })
}

fn exact_div(num: BigInt, den: &BigInt) -> Result<BigInt> {
    let (q, rem) = num.div_rem(den);
    if !rem.is_zero() {
        return Err(Error::Invariant("inexact division in fraction-free elimination".into()));
    }
    Ok(q)
}

pub fn rank(m: Vec<Vec<BigInt>>) -> Result<usize> {
    Ok(bareiss(m)?.rank())
}

/// A nonzero `x` with `m x = 0`, or `None` when the columns are independent.
/// Normalized to coprime integers with a positive first nonzero entry.
pub fn kernel_vector(m: Vec<Vec<BigInt>>, ncols: usize) -> Result<Option<Vec<BigRational>>> {
    let ech = bareiss(m)?;
    let ncols = if ech.rows.is_empty() { ncols } else { ech.ncols };
    let Some(free) = (0..ncols).find(|c| !ech.pivots.contains(c)) else {
        return Ok(None);
    };
    let mut x = vec![BigRational::zero(); ncols];
    x[free] = BigRational::one();
    for k in (0..ech.rank()).rev() {
        let pc = ech.pivots[k];
        let row = &ech.rows[k];
        let mut s = BigRational::zero();
        for j in pc + 1..ncols {
            if !row[j].is_zero() && !x[j].is_zero() {
                s += BigRational::from_integer(row[j].clone()) * &x[j];
            }
        }
        x[pc] = -s / BigRational::from_integer(row[pc].clone());
    }
    Ok(Some(normalize(x)))
}

/// A nonzero `y` with `yᵀ m = 0` (a dependency among the rows of `m`).
pub fn left_kernel_vector(m: &[Vec<BigInt>]) -> Result<Option<Vec<BigRational>>> {
    let nrows = m.len();
    let ncols = m.first().map_or(0, Vec::len);
    let transposed: Vec<Vec<BigInt>> = (0..ncols)
        .map(|j| (0..nrows).map(|i| m[i][j].clone()).collect())
        .collect();
    kernel_vector(transposed, nrows)
}

fn normalize(x: Vec<BigRational>) -> Vec<BigRational> {
    let lcm = x.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let ints: Vec<BigInt> = x.iter().map(|v| (v * BigRational::from_integer(lcm.clone())).to_integer()).collect();
    let mut g = ints.iter().fold(BigInt::zero(), |acc, v| acc.gcd(v));
    if g.is_zero() {
        return x;
    }
    if ints.iter().find(|v| !v.is_zero()).is_some_and(|v| v.is_negative()) {
        g = -g;
    }
    ints.into_iter().map(|v| BigRational::from_integer(v / &g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[i64]]) -> Vec<Vec<BigInt>> {
        rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect()
    }

    /// Oracle: plain rational Gauss–Jordan rank.
    fn rational_rank(m: &[Vec<BigInt>]) -> usize {
        let mut a: Vec<Vec<BigRational>> = m
            .iter()
            .map(|r| r.iter().map(|v| BigRational::from_integer(v.clone())).collect())
            .collect();
        let ncols = a.first().map_or(0, Vec::len);
        let mut r = 0;
        for c in 0..ncols {
            let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else { continue };
            a.swap(r, p);
            for i in 0..a.len() {
                if i != r && !a[i][c].is_zero() {
                    let f = &a[i][c] / &a[r][c];
                    for j in 0..ncols {
                        let t = &f * &a[r][j];
                        a[i][j] -= t;
                    }
                }
            }
            r += 1;
        }
        r
    }

    #[test]
    fn remark_matrix_has_rank_five() {
        let m = mat(&[
            &[0, 1, 0, 2, 1, 0],
            &[0, 0, 1, 0, 1, 2],
            &[0, 1, 0, 0, 0, 0],
            &[0, 0, 1, 0, 0, 0],
            &[0, 0, 0, 1, 0, 0],
            &[0, 0, 0, 0, 1, 0],
        ]);
        assert_eq!(rank(m.clone()).unwrap(), 5);
        let y = left_kernel_vector(&m).unwrap().unwrap();
        for j in 0..6 {
            let s: BigRational = (0..6).map(|i| &y[i] * BigRational::from_integer(m[i][j].clone())).sum();
            assert!(s.is_zero());
        }
    }

    #[test]
    fn full_rank_has_no_kernel() {
        let m = mat(&[&[2, 1], &[1, 3]]);
        assert_eq!(rank(m.clone()).unwrap(), 2);
        assert!(kernel_vector(m, 2).unwrap().is_none());
        assert_eq!(rank(Vec::new()).unwrap(), 0);
    }

    proptest! {
        #[test]
        fn bareiss_rank_matches_rational_oracle(
            rows in 1usize..6, cols in 1usize..6,
            data in proptest::collection::vec(-3i64..4, 36),
            zero_col in 0usize..6,
        ) {
            let mut m: Vec<Vec<BigInt>> = (0..rows)
                .map(|i| (0..cols).map(|j| BigInt::from(data[i * 6 + j])).collect())
                .collect();
            // force some rank deficiency
            if zero_col < cols {
                for r in m.iter_mut() { r[zero_col] = BigInt::zero(); }
            }
            prop_assert_eq!(rank(m.clone()).unwrap(), rational_rank(&m));
            if let Some(x) = kernel_vector(m.clone(), cols).unwrap() {
                prop_assert!(x.iter().any(|v| !v.is_zero()));
                for r in &m {
                    let s: BigRational = r.iter().zip(&x).map(|(a, b)| BigRational::from_integer(a.clone()) * b).sum();
                    prop_assert!(s.is_zero());
                }
            } else {
                prop_assert_eq!(rational_rank(&m), cols);
            }
        }
    }
}
