//! Dense linear solve for the implicit conduction step.
//!
//! The network stays around two dozen unknowns, so plain Gaussian
//! elimination with partial pivoting is both fast enough and simple to
//! keep generic over the scalar type.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `a x = b` in place; `a` is row-major square, `b` becomes `x`.
pub fn solve_in_place<T: Scalar>(a: &mut [Vec<T>], b: &mut [T]) -> Result<()> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return Err(Error::LinearSolve(format!(
            "shape mismatch: matrix {}x? for rhs of {n}",
            a.len()
        )));
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a[i][col]
                    .abs()
                    .partial_cmp(&a[j][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        let pivot = a[pivot_row][col];
        if !pivot.is_finite() || pivot.abs() <= T::epsilon() * T::lit(16.0) {
            return Err(Error::LinearSolve(format!(
                "singular at column {col} (pivot {pivot})"
            )));
        }
        if pivot_row != col {
            a.swap(pivot_row, col);
            b.swap(pivot_row, col);
        }
        for row in col + 1..n {
            let factor = a[row][col] / pivot;
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let above = a[col][k];
                a[row][k] = a[row][k] - factor * above;
            }
            let rhs_above = b[col];
            b[row] = b[row] - factor * rhs_above;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc = acc - a[col][k] * b[k];
        }
        b[col] = acc / a[col][col];
    }
    Ok(())
}

/// Convenience wrapper returning the solution.
pub fn solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    solve_in_place(&mut a, &mut b)?;
    Ok(b)
}

/// Minimizes `‖A x - b‖_2` by Householder QR with column pivoting.
/// Rank-deficient columns (relative pivot below `RANK_TOLERANCE`) are
/// dropped and their unknowns set to zero, so collinear regressors give
/// a finite basic solution instead of a singular solve.
pub fn least_squares<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Result<Vec<T>> {
    const RANK_TOLERANCE: f64 = 1.0e-12;
    let m = a.len();
    let n = if m == 0 { 0 } else { a[0].len() };
    if m < n {
        return Err(Error::LinearSolve(format!(
            "underdetermined system: {m} rows, {n} columns"
        )));
    }
    if b.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::LinearSolve("inconsistent dimensions".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Column-major working copy; r[j] is column j.
    let mut r: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| a[i][j]).collect()).collect();
    let mut rhs = b.to_vec();
    let mut permutation: Vec<usize> = (0..n).collect();

    let column_tail_norm2 = |col: &[T], from: usize| -> T {
        col[from..].iter().map(|v| *v * *v).sum::<T>()
    };

    let mut rank = n;
    let mut first_pivot = T::zero();
    for k in 0..n {
        let mut best = k;
        let mut best_norm = column_tail_norm2(&r[k], k);
        for j in k + 1..n {
            let norm = column_tail_norm2(&r[j], k);
            if norm > best_norm {
                best = j;
                best_norm = norm;
            }
        }
        r.swap(k, best);
        permutation.swap(k, best);
        let pivot = best_norm.sqrt();
        if k == 0 {
            first_pivot = pivot;
        }
        if !(pivot > first_pivot * T::lit(RANK_TOLERANCE)) || pivot == T::zero() {
            rank = k;
            break;
        }

        // Householder vector for column k below the diagonal.
        let alpha = if r[k][k] >= T::zero() { -pivot } else { pivot };
        let mut v: Vec<T> = r[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().map(|x| *x * *x).sum::<T>();
        if vnorm2 > T::zero() {
            for col in r.iter_mut().skip(k) {
                let dot: T = v
                    .iter()
                    .zip(&col[k..])
                    .map(|(vi, ci)| *vi * *ci)
                    .sum::<T>();
                let scale = (T::one() + T::one()) * dot / vnorm2;
                for (vi, ci) in v.iter().zip(col[k..].iter_mut()) {
                    *ci = *ci - scale * *vi;
                }
            }
            let dot: T = v
                .iter()
                .zip(&rhs[k..])
                .map(|(vi, bi)| *vi * *bi)
                .sum::<T>();
            let scale = (T::one() + T::one()) * dot / vnorm2;
            for (vi, bi) in v.iter().zip(rhs[k..].iter_mut()) {
                *bi = *bi - scale * *vi;
            }
        }
        r[k][k] = alpha;
        for row in r[k][k + 1..].iter_mut() {
            *row = T::zero();
        }
    }

    // Back substitution over the leading rank x rank triangle.
    let mut z = vec![T::zero(); n];
    for k in (0..rank).rev() {
        let mut acc = rhs[k];
        for j in k + 1..rank {
            acc = acc - r[j][k] * z[j];
        }
        z[k] = acc / r[k][k];
    }
    let mut x = vec![T::zero(); n];
    for (k, zk) in z.into_iter().enumerate() {
        x[permutation[k]] = zk;
    }
    Ok(x)
}
