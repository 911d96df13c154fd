//! Two-phase dense simplex with Bland's rule, generic over an ordered field.
//!
//! Instantiated with `BigRational` this is the exact path behind
//! commutative feasibility questions. Bland's rule keeps it finite on
//! degenerate problems, which the tiny instances here frequently are.

use crate::scalar::Field;

/// `maximize c·x  subject to  A x = b, x ≥ 0`.
#[derive(Debug, Clone)]
pub struct StandardLp<F> {
    pub a: Vec<Vec<F>>,
    pub b: Vec<F>,
    pub c: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<F> {
    Optimal { x: Vec<F>, value: F },
    Infeasible,
    Unbounded,
}

struct Tableau<F> {
    rows: Vec<Vec<F>>,
    obj: Vec<F>,
    basis: Vec<usize>,
    ncols: usize,
}

impl<F: Field> Tableau<F> {
    fn pivot(&mut self, r: usize, col: usize) {
        let inv = F::one() / self.rows[r][col].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() * inv.clone();
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && !row[col].is_zero() {
                let f = row[col].clone();
                for (v, p) in row.iter_mut().zip(&prow) {
                    *v = v.clone() - f.clone() * p.clone();
                }
            }
        }
        if !self.obj[col].is_zero() {
            let f = self.obj[col].clone();
            for (v, p) in self.obj.iter_mut().zip(&prow) {
                *v = v.clone() - f.clone() * p.clone();
            }
        }
        self.basis[r] = col;
    }

    /// Runs Bland's rule over the columns `allowed`; `false` when unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let Some(col) = (0..allowed).find(|&j| self.obj[j] > F::pivot_tol()) else {
                return true;
            };
            let rhs = self.ncols;
            let mut best: Option<(usize, F)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[col] > F::pivot_tol() {
                    let ratio = row[rhs].clone() / row[col].clone();
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br || (ratio == br && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                None => return false,
                Some((r, _)) => self.pivot(r, col),
            }
        }
    }
}

pub fn solve<F: Field>(lp: &StandardLp<F>) -> LpOutcome<F> {
    let m = lp.a.len();
    let n = lp.c.len();
    assert!(lp.a.iter().all(|r| r.len() == n), "ragged constraint matrix");
    assert_eq!(lp.b.len(), m, "rhs length");

    // phase 1: artificials n..n+m, rhs column at n+m
    let ncols = n + m;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = lp.b[i] < F::zero();
        let mut row = vec![F::zero(); ncols + 1];
        for j in 0..n {
            row[j] = if flip { -lp.a[i][j].clone() } else { lp.a[i][j].clone() };
        }
        row[n + i] = F::one();
        row[ncols] = if flip { -lp.b[i].clone() } else { lp.b[i].clone() };
        rows.push(row);
    }
    let mut obj = vec![F::zero(); ncols + 1];
    for row in &rows {
        for j in 0..n {
            obj[j] = obj[j].clone() + row[j].clone();
        }
        obj[ncols] = obj[ncols].clone() + row[ncols].clone();
    }
    let mut t = Tableau { rows, obj, basis: (n..n + m).collect(), ncols };
    t.optimize(n + m);
    // obj[rhs] holds the remaining artificial mass
    if t.obj[ncols] > F::pivot_tol() {
        return LpOutcome::Infeasible;
    }

    // drive artificials out of the basis, dropping redundant rows
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| t.rows[r][j].abs() > F::pivot_tol()) {
                Some(col) => {
                    t.pivot(r, col);
                    r += 1;
                }
                None => {
                    t.rows.remove(r);
                    t.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    // phase 2
    let mut obj = vec![F::zero(); ncols + 1];
    for j in 0..n {
        obj[j] = lp.c[j].clone();
    }
    for (i, row) in t.rows.iter().enumerate() {
        let cb = lp.c[t.basis[i]].clone();
        if cb.is_zero() {
            continue;
        }
        for j in 0..=ncols {
            obj[j] = obj[j].clone() - cb.clone() * row[j].clone();
        }
    }
    t.obj = obj;
    if !t.optimize(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![F::zero(); n];
    for (i, &bcol) in t.basis.iter().enumerate() {
        x[bcol] = t.rows[i][ncols].clone();
    }
    let value = x.iter().zip(&lp.c).fold(F::zero(), |acc, (xi, ci)| acc + xi.clone() * ci.clone());
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    fn q(p: i64, d: i64) -> BigRational {
        ratio(p, d)
    }

    #[test]
    fn small_optimum() {
        // max x + y st x + 2y + s1 = 4, 3x + y + s2 = 6
        let lp = StandardLp {
            a: vec![vec![q(1, 1), q(2, 1), q(1, 1), q(0, 1)], vec![q(3, 1), q(1, 1), q(0, 1), q(1, 1)]],
            b: vec![q(4, 1), q(6, 1)],
            c: vec![q(1, 1), q(1, 1), q(0, 1), q(0, 1)],
        };
        match solve(&lp) {
            LpOutcome::Optimal { x, value } => {
                assert_eq!(value, q(14, 5));
                assert_eq!(x[0], q(8, 5));
                assert_eq!(x[1], q(6, 5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = StandardLp { a: vec![vec![q(1, 1)]], b: vec![q(-1, 1)], c: vec![q(0, 1)] };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
        let lp = StandardLp { a: vec![vec![q(1, 1), q(-1, 1)]], b: vec![q(0, 1)], c: vec![q(1, 1), q(0, 1)] };
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let lp = StandardLp {
            a: vec![vec![q(1, 1), q(1, 1)], vec![q(2, 1), q(2, 1)]],
            b: vec![q(1, 1), q(2, 1)],
            c: vec![q(1, 1), q(0, 1)],
        };
        assert!(matches!(solve(&lp), LpOutcome::Optimal { value, .. } if value == q(1, 1)));
    }

    #[test]
    fn float_instantiation() {
        let lp = StandardLp { a: vec![vec![1.0, 1.0]], b: vec![2.0], c: vec![3.0, 1.0] };
        assert!(matches!(solve(&lp), LpOutcome::Optimal { value, .. } if value == 6.0));
    }
}
