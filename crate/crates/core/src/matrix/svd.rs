use super::dense::{dot, DenseMatrix};
use super::qr::qr_thin;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// Full thin SVD of a small dense matrix.
///
/// The input is first reduced to a square triangular factor by Householder
/// QR of its (wide side) transpose, and the factor is diagonalized with
/// one-sided Jacobi rotations. For an `r×c` input with `l = min(r, c)`, returns
/// `u` (`r×l`), `s` (length `l`, non-increasing, non-negative) and `v`
/// (`c×l`) with `a = u·diag(s)·vᵀ`.
pub fn dense_svd_small(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    if !a.is_finite() {
        return Err(Error::NonFinite("dense_svd_small"));
    }
    if a.rows() > a.cols() {
        let (u, s, v) = wide_svd(&a.transpose())?;
        return Ok((v, s, u));
    }
    wide_svd(a)
}

fn wide_svd(a: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let l = a.rows();
    if l == 0 {
        return Ok((
            DenseMatrix::zeros(0, 0),
            Vec::new(),
            DenseMatrix::zeros(a.cols(), 0),
        ));
    }
    // aᵀ = Q R  =>  a = Rᵀ Qᵀ.
    let (q, r) = qr_thin(&a.transpose())?;

    // Columns of R, rotated until mutually orthogonal: R W = U' S.
    let mut rc: Vec<Vec<f64>> = (0..l).map(|j| r.column(j)).collect();
    let mut wc: Vec<Vec<f64>> = (0..l)
        .map(|j| {
            let mut e = vec![0.0; l];
            e[j] = 1.0;
            e
        })
        .collect();
    jacobi_orthogonalize(&mut rc, &mut wc);

    let norms: Vec<f64> = rc.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let smax = s[0];
    let tiny = smax * (l as f64) * f64::EPSILON * 4.0;

    let mut u_prime: Vec<Vec<f64>> = Vec::with_capacity(l);
    let mut deficient = Vec::new();
    for (pos, &j) in order.iter().enumerate() {
        if norms[j] > tiny && norms[j] > 0.0 {
            u_prime.push(rc[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_prime.push(vec![0.0; l]);
            deficient.push(pos);
        }
    }
    complete_basis(&mut u_prime, &deficient);

    // u = W (reordered); v = Q U'.
    let u = DenseMatrix::from_fn(l, l, |i, k| wc[order[k]][i]);
    let up = DenseMatrix::from_fn(l, l, |i, k| u_prime[k][i]);
    let v = q.matmul(&up)?;
    Ok((u, s, v))
}

/// Hestenes one-sided Jacobi: rotates column pairs of `cols` until they are
/// mutually orthogonal, applying the same rotations to `acc`.
fn jacobi_orthogonalize(cols: &mut [Vec<f64>], acc: &mut [Vec<f64>]) {
    let n = cols.len();
    let tol = f64::EPSILON * (n as f64).max(1.0);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(cols, p, q, c, s);
                rotate(acc, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (x, y) = (&mut lo[p], &mut hi[0]);
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed positions of `basis` with unit vectors orthogonal to every
/// other column, using the standard basis as candidates.
fn complete_basis(basis: &mut [Vec<f64>], missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let dim = basis[0].len();
    let mut candidate = 0;
    for &pos in missing {
        loop {
            assert!(candidate < dim, "basis completion ran out of candidates");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for (k, b) in basis.iter().enumerate() {
                    if k == pos || (missing.contains(&k) && b.iter().all(|&x| x == 0.0)) {
                        continue;
                    }
                    let proj = dot(&e, b);
                    for (ei, bi) in e.iter_mut().zip(b) {
                        *ei -= proj * bi;
                    }
                }
            }
            let n = dot(&e, &e).sqrt();
            if n > 0.5 {
                basis[pos] = e.into_iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}
