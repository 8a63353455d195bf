use rayon::prelude::*;

use super::dense::{dot, DenseMatrix};
use crate::error::{Error, Result};

/// Thin QR factorization by Householder reflections.
///
/// For an `m×n` input with `m >= n`, returns `q` (`m×n`, orthonormal columns)
/// and `r` (`n×n`, upper triangular, non-negative diagonal).
pub fn qr_thin(a: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::dims(
            "qr_thin",
            format!("{m}x{n} input needs rows >= cols"),
        ));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("qr_thin"));
    }

    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for j in 0..n {
        let v = householder_vector(&cols[j][j..]);
        if let Some(v) = &v {
            let (_, rest) = cols.split_at_mut(j);
            rest.par_iter_mut().for_each(|c| reflect(v, &mut c[j..]));
        }
        reflectors.push(v.unwrap_or_default());
    }

    let mut r = DenseMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        for i in 0..=j {
            r[(i, j)] = c[i];
        }
    }

    // Accumulate Q = H_0 H_1 ... H_{n-1} applied to the leading n columns of I.
    let mut q_cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    q_cols.par_iter_mut().for_each(|c| {
        for (j, v) in reflectors.iter().enumerate().rev() {
            if !v.is_empty() {
                reflect(v, &mut c[j..]);
            }
        }
    });

    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for k in j..n {
                r[(j, k)] = -r[(j, k)];
            }
            for x in q_cols[j].iter_mut() {
                *x = -*x;
            }
        }
    }

    let q = DenseMatrix::from_fn(m, n, |i, j| q_cols[j][i]);
    Ok((q, r))
}

/// Unit vector `v` with `(I − 2vvᵀ)x = αe₁`; `None` when `x` is zero.
fn householder_vector(x: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(x, x).sqrt();
    if norm == 0.0 {
        return None;
    }
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vn = dot(&v, &v).sqrt();
    if vn == 0.0 {
        return None;
    }
    v.iter_mut().for_each(|e| *e /= vn);
    Some(v)
}

#[inline]
fn reflect(v: &[f64], x: &mut [f64]) {
    let s = 2.0 * dot(v, x);
    if s != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= s * vi;
        }
    }
}
