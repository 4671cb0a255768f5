//! Exact Gaussian elimination over the rationals.

use num_traits::{One, Zero};

use crate::poly::Q;

/// Row-reduces `rows` in place to reduced row echelon form and returns the
/// pivot column of each nonzero row. Zero rows are dropped.
pub fn rref(rows: &mut Vec<Vec<Q>>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = Q::one() / &rows[r][col];
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[col].is_zero() {
                continue;
            }
            let f = row[col].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    rows.truncate(r);
    pivots
}

/// Basis of `{v : A v = 0}`, one vector per free column in increasing order.
pub fn nullspace(a: &[Vec<Q>], ncols: usize) -> Vec<Vec<Q>> {
    let mut rows = a.to_vec();
    let pivots = rref(&mut rows, ncols);
    let mut basis = Vec::new();
    for free in (0..ncols).filter(|c| !pivots.contains(c)) {
        let mut v = vec![Q::zero(); ncols];
        v[free] = Q::one();
        for (row, &pc) in rows.iter().zip(&pivots) {
            v[pc] = -row[free].clone();
        }
        basis.push(v);
    }
    basis
}

/// Some `x` with `A x = b`, if one exists.
pub fn solve(a: &[Vec<Q>], b: &[Q], ncols: usize) -> Option<Vec<Q>> {
    let mut rows: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut r = r.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let pivots = rref(&mut rows, ncols + 1);
    if pivots.last() == Some(&ncols) {
        return None;
    }
    let mut x = vec![Q::zero(); ncols];
    for (row, &pc) in rows.iter().zip(&pivots) {
        x[pc] = row[ncols].clone();
    }
    Some(x)
}

pub fn rank(a: &[Vec<Q>], ncols: usize) -> usize {
    let mut rows = a.to_vec();
    rref(&mut rows, ncols).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{q, qi};
    use proptest::prelude::*;

    fn mat(rows: &[&[i64]]) -> Vec<Vec<Q>> {
        rows.iter().map(|r| r.iter().map(|&v| qi(v)).collect()).collect()
    }

    fn mul(a: &[Vec<Q>], v: &[Q]) -> Vec<Q> {
        a.iter()
            .map(|r| r.iter().zip(v).fold(Q::zero(), |acc, (x, y)| acc + x * y))
            .collect()
    }

    #[test]
    fn small_nullspace() {
        let a = mat(&[&[1, 2, 3], &[2, 4, 6]]);
        let n = nullspace(&a, 3);
        assert_eq!(n.len(), 2);
        for v in &n {
            assert!(mul(&a, v).iter().all(Zero::is_zero));
        }
        assert_eq!(rank(&a, 3), 1);
    }

    #[test]
    fn solve_consistent_and_not() {
        let a = mat(&[&[1, 1], &[1, -1]]);
        assert_eq!(solve(&a, &[qi(3), qi(1)], 2), Some(vec![qi(2), qi(1)]));
        let a = mat(&[&[1, 1], &[2, 2]]);
        assert_eq!(solve(&a, &[qi(1), qi(3)], 2), None);
        assert_eq!(solve(&a, &[q(1, 2), qi(1)], 2).map(|x| &x[0] + &x[1]), Some(q(1, 2)));
    }

    proptest! {
        #[test]
        fn nullspace_is_kernel(entries in proptest::collection::vec(-3i64..=3, 12)) {
            let a: Vec<Vec<Q>> = entries.chunks(4).map(|r| r.iter().map(|&v| qi(v)).collect()).collect();
            let n = nullspace(&a, 4);
            prop_assert_eq!(n.len() + rank(&a, 4), 4);
            for v in &n {
                prop_assert!(mul(&a, v).iter().all(Zero::is_zero));
            }
        }
    }
}
