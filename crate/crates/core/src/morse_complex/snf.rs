//! Smith normal form over the integers with exact arithmetic.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

pub type IntMatrix = Vec<Vec<BigInt>>;

/// `U · A · V = D`, `U` and `V` unimodular, `D` diagonal with
/// `d₁ | d₂ | …` and nonnegative entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmithForm {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
    pub rank: usize,
    pub diagonal: Vec<BigInt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmithSummary {
    pub rank: usize,
    /// Diagonal entries greater than one.
    pub torsion: Vec<String>,
}

impl SmithForm {
    pub fn torsion(&self) -> Vec<BigInt> {
        self.diagonal.iter().filter(|d| **d > BigInt::one()).cloned().collect()
    }

    pub fn summary(&self) -> SmithSummary {
        SmithSummary {
            rank: self.rank,
            torsion: self.torsion().iter().map(|t| t.to_string()).collect(),
        }
    }
}

pub fn from_i64(rows: &[Vec<i64>]) -> IntMatrix {
    rows.iter()
        .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
        .collect()
}

pub fn identity(n: usize) -> IntMatrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect()
}

pub fn multiply(a: &IntMatrix, b: &IntMatrix, inner: usize, cols: usize) -> IntMatrix {
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| {
                    let mut s = BigInt::zero();
                    for k in 0..inner {
                        if !row[k].is_zero() && !b[k][j].is_zero() {
                            s += &row[k] * &b[k][j];
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

struct Work {
    a: IntMatrix,
    u: IntMatrix,
    v: IntMatrix,
    rows: usize,
    cols: usize,
}

impl Work {
    fn swap_rows(&mut self, i: usize, j: usize) {
        self.a.swap(i, j);
        self.u.swap(i, j);
    }

    fn swap_cols(&mut self, i: usize, j: usize) {
        for r in self.a.iter_mut() {
            r.swap(i, j);
        }
        for r in self.v.iter_mut() {
            r.swap(i, j);
        }
    }

    /// row_j ← row_j − q · row_i
    fn row_axpy(&mut self, j: usize, i: usize, q: &BigInt) {
        for c in 0..self.cols {
            let t = &self.a[i][c] * q;
            self.a[j][c] -= t;
        }
        for c in 0..self.rows {
            let t = &self.u[i][c] * q;
            self.u[j][c] -= t;
        }
    }

    /// col_j ← col_j − q · col_i
    fn col_axpy(&mut self, j: usize, i: usize, q: &BigInt) {
        for r in 0..self.rows {
            let t = &self.a[r][i] * q;
            self.a[r][j] -= t;
        }
        for r in 0..self.cols {
            let t = &self.v[r][i] * q;
            self.v[r][j] -= t;
        }
    }

    fn negate_row(&mut self, i: usize) {
        for x in self.a[i].iter_mut() {
            *x = -&*x;
        }
        for x in self.u[i].iter_mut() {
            *x = -&*x;
        }
    }

    fn smallest_nonzero(&self, t: usize) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        for i in t..self.rows {
            for j in t..self.cols {
                if self.a[i][j].is_zero() {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => self.a[i][j].abs() < self.a[bi][bj].abs(),
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        best
    }
}

pub fn smith_normal_form(mat: &IntMatrix) -> SmithForm {
    let rows = mat.len();
    let cols = mat.first().map_or(0, |r| r.len());
    let mut w = Work {
        a: mat.clone(),
        u: identity(rows),
        v: identity(cols),
        rows,
        cols,
    };
    let mut rank = 0;
    for t in 0..rows.min(cols) {
        while let Some((pi, pj)) = w.smallest_nonzero(t) {
            w.swap_rows(t, pi);
            w.swap_cols(t, pj);
            for i in t + 1..rows {
                if !w.a[i][t].is_zero() {
                    let q = nearest_quotient(&w.a[i][t], &w.a[t][t]);
                    w.row_axpy(i, t, &q);
                }
            }
            for j in t + 1..cols {
                if !w.a[t][j].is_zero() {
                    let q = nearest_quotient(&w.a[t][j], &w.a[t][t]);
                    w.col_axpy(j, t, &q);
                }
            }
            let clear = (t + 1..rows).all(|i| w.a[i][t].is_zero()) && (t + 1..cols).all(|j| w.a[t][j].is_zero());
            if !clear {
                continue;
            }
            // pivot must divide the remaining block
            let offender = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !w.a[i][j].is_multiple_of(&w.a[t][t])));
            match offender {
                Some(i) => {
                    let minus_one = -BigInt::one();
                    w.row_axpy(t, i, &minus_one);
                }
                None => break,
            }
        }
        if w.a[t][t].is_zero() {
            break;
        }
        if w.a[t][t].is_negative() {
            w.negate_row(t);
        }
        rank += 1;
    }
    let diagonal = (0..rank).map(|i| w.a[i][i].clone()).collect();
    SmithForm {
        u: w.u,
        d: w.a,
        v: w.v,
        rank,
        diagonal,
    }
}

/// `round(a / b)`, so remainders satisfy `|r| ≤ |b| / 2`.
fn nearest_quotient(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_mod_floor(b);
    // floor remainder carries the sign of b
    if (&r * 2u32).abs() > b.abs() {
        q + 1
    } else {
        q
    }
}

/// Rank over GF(2).
pub fn rank_mod2(mat: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<u8>> = mat
        .iter()
        .map(|r| r.iter().map(|x| x.rem_euclid(2) as u8).collect())
        .collect();
    let rows = a.len();
    let cols = a.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[r][c] == 1) else {
            continue;
        };
        a.swap(rank, p);
        for r in 0..rows {
            if r != rank && a[r][c] == 1 {
                for k in 0..cols {
                    a[r][k] ^= a[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let s = smith_normal_form(&from_i64(&[vec![2, 4], vec![6, 8]]));
        assert_eq!(s.diagonal, vec![BigInt::from(2), BigInt::from(4)]);
        assert_eq!(s.rank, 2);
        let s = smith_normal_form(&identity(3));
        assert!(s.torsion().is_empty());
        assert_eq!(s.rank, 3);
        let s = smith_normal_form(&from_i64(&[vec![0, 0], vec![0, 0]]));
        assert_eq!(s.rank, 0);
        assert_eq!(rank_mod2(&[vec![2, 4], vec![6, 8]]), 0);
        assert_eq!(rank_mod2(&[vec![1, 1], vec![1, 1]]), 1);
    }
}
