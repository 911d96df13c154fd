//! Exact Gaussian elimination over an ordered field.

use crate::scalar::Field;

/// Reduced row echelon form in place; returns the pivot columns.
pub fn rref<F: Field>(rows: &mut Vec<Vec<F>>) -> Vec<usize> {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][col].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = F::one() / rows[r][col].clone();
        for v in rows[r].iter_mut() {
            *v = v.clone() * inv.clone();
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = rows[i][col].clone();
                for j in 0..ncols {
                    let delta = f.clone() * rows[r][j].clone();
                    rows[i][j] = rows[i][j].clone() - delta;
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    pivots
}

pub fn rank<F: Field>(vectors: &[Vec<F>]) -> usize {
    let mut rows = vectors.to_vec();
    rref(&mut rows).len()
}

/// Indices of a maximal linearly independent subset, chosen greedily in order.
pub fn independent_subset<F: Field>(vectors: &[Vec<F>]) -> Vec<usize> {
    let mut kept: Vec<Vec<F>> = Vec::new();
    let mut idx = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        let mut trial = kept.clone();
        trial.push(v.clone());
        if rank(&trial) == trial.len() {
            kept.push(v.clone());
            idx.push(i);
        }
    }
    idx
}

/// Basis of `{x : A x = 0}` for `A` given by rows with `ncols` columns.
pub fn null_space<F: Field>(a: &[Vec<F>], ncols: usize) -> Vec<Vec<F>> {
    let mut rows = a.to_vec();
    let pivots = rref(&mut rows);
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&f| {
            let mut x = vec![F::zero(); ncols];
            x[f] = F::one();
            for (r, &p) in pivots.iter().enumerate() {
                x[p] = -rows[r][f].clone();
            }
            x
        })
        .collect()
}

/// Some solution of `A x = b`, or `None` when inconsistent.
pub fn solve<F: Field>(a: &[Vec<F>], b: &[F], ncols: usize) -> Option<Vec<F>> {
    let mut rows: Vec<Vec<F>> = a
        .iter()
        .zip(b)
        .map(|(r, bi)| {
            let mut r = r.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let pivots = rref(&mut rows);
    if pivots.contains(&ncols) {
        return None;
    }
    let mut x = vec![F::zero(); ncols];
    for (r, &p) in pivots.iter().enumerate() {
        x[p] = rows[r][ncols].clone();
    }
    Some(x)
}
