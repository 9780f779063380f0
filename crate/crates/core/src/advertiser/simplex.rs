//! Dense tableau simplex for `max objᵀy  s.t.  A y ≤ rhs, y ≥ 0` with
//! `rhs ≥ 0`, so the slack basis is feasible from the start.
//!
//! Pivoting follows Bland's rule (lowest eligible entering column, lowest
//! basic index on ratio ties), which rules out cycling. Shadow prices of the
//! rows are read off the objective row at the slack columns.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimplexStatus {
    Optimal,
    Unbounded,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOutcome<T> {
    pub status: SimplexStatus,
    pub primal: Vec<T>,
    /// One shadow price per row of `A`.
    pub dual: Vec<T>,
    pub objective: T,
    pub pivots: usize,
}

pub fn maximize<T: Scalar>(a: &[Vec<T>], rhs: &[T], obj: &[T], max_pivots: usize) -> SimplexOutcome<T> {
    let rows = a.len();
    let cols = obj.len();
    assert_eq!(rhs.len(), rows, "one right-hand side per row");
    assert!(a.iter().all(|r| r.len() == cols), "ragged constraint matrix");
    assert!(rhs.iter().all(|&b| b >= T::zero()), "slack basis needs rhs >= 0");

    let width = cols + rows + 1;
    let rhs_col = width - 1;
    let eps = T::tolerance();
    let mut tab: Vec<Vec<T>> = (0..rows)
        .map(|i| {
            let mut r = Vec::with_capacity(width);
            r.extend_from_slice(&a[i]);
            r.extend((0..rows).map(|k| if k == i { T::one() } else { T::zero() }));
            r.push(rhs[i]);
            r
        })
        .collect();
    let mut z: Vec<T> = obj.iter().map(|&v| -v).chain(std::iter::repeat_n(T::zero(), rows + 1)).collect();
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    let mut pivots = 0;
    let status = loop {
        let Some(enter) = (0..cols + rows).find(|&j| z[j] < -eps) else {
            break SimplexStatus::Optimal;
        };
        if pivots >= max_pivots {
            break SimplexStatus::IterationCap;
        }
        let mut leave: Option<usize> = None;
        for i in 0..rows {
            let coef = tab[i][enter];
            if coef <= eps {
                continue;
            }
            let better = match leave {
                None => true,
                Some(l) => {
                    let lhs = tab[i][rhs_col] * tab[l][enter];
                    let rhs_ = tab[l][rhs_col] * coef;
                    lhs < rhs_ - eps || ((lhs - rhs_).abs() <= eps && basis[i] < basis[l])
                }
            };
            if better {
                leave = Some(i);
            }
        }
        let Some(p) = leave else {
            break SimplexStatus::Unbounded;
        };
        pivot(&mut tab, &mut z, p, enter);
        basis[p] = enter;
        pivots += 1;
    };

    let mut primal = vec![T::zero(); cols];
    for (i, &b) in basis.iter().enumerate() {
        if b < cols {
            primal[b] = tab[i][rhs_col];
        }
    }
    let dual = (0..rows).map(|i| z[cols + i]).collect();
    SimplexOutcome { status, primal, dual, objective: z[rhs_col], pivots }
}

fn pivot<T: Scalar>(tab: &mut [Vec<T>], z: &mut [T], p: usize, enter: usize) {
    let inv = T::one() / tab[p][enter];
    for v in tab[p].iter_mut() {
        *v = *v * inv;
    }
    let prow = tab[p].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i == p {
            continue;
        }
        let f = row[enter];
        if f != T::zero() {
            for (v, &pv) in row.iter_mut().zip(&prow) {
                *v = *v - f * pv;
            }
        }
    }
    let f = z[enter];
    if f != T::zero() {
        for (v, &pv) in z.iter_mut().zip(&prow) {
            *v = *v - f * pv;
        }
    }
}
