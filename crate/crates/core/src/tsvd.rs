//! Truncated SVD of sparse matrices by randomized subspace iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{dense_svd_small, qr_thin, DenseMatrix, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsvdParams {
    /// Target rank.
    pub k: usize,
    /// Extra sketch columns beyond `k`.
    pub oversampling: usize,
    /// Rounds of `Y ← M(Mᵀ Q)` applied to the sketch. With `tol` set this is
    /// the minimum number of rounds.
    pub power_iters: usize,
    pub seed: u64,
    /// Keep iterating until the top-`k` Ritz values change by at most this
    /// relative amount between rounds.
    pub tol: Option<f64>,
    /// Round cap when `tol` is set.
    pub max_power_iters: usize,
}

impl TsvdParams {
    pub fn new(k: usize) -> Self {
        TsvdParams {
            k,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_power_iters(mut self, power_iters: usize) -> Self {
        self.power_iters = power_iters;
        self
    }

    pub fn with_oversampling(mut self, oversampling: usize) -> Self {
        self.oversampling = oversampling;
        self
    }

    pub fn with_tol(mut self, tol: f64, max_power_iters: usize) -> Self {
        self.tol = Some(tol);
        self.max_power_iters = max_power_iters;
        self
    }

    pub fn sketch_width(&self) -> usize {
        self.k + self.oversampling
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParam("truncated SVD rank k must be >= 1".into()));
        }
        if self.sketch_width() > rows.min(cols) {
            return Err(Error::InvalidParam(format!(
                "k + oversampling = {} exceeds min dimension of a {rows}x{cols} matrix",
                self.sketch_width()
            )));
        }
        if self.tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::InvalidParam("tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for TsvdParams {
    fn default() -> Self {
        TsvdParams {
            k: 64,
            oversampling: 10,
            power_iters: 7,
            seed: 0,
            tol: None,
            max_power_iters: 100,
        }
    }
}

/// Rank-`k` factors `u·diag(s)·vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsvdResult {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
    /// Subspace iteration rounds actually run.
    pub iterations: usize,
}

impl TsvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// Dense `u·diag(s)·vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.u
            .scale_columns(&self.s)
            .and_then(|us| us.matmul(&self.v.transpose()))
            .expect("factor shapes agree")
    }
}

/// Gaussian test matrix drawn from a ChaCha8 stream, filled row-major.
pub fn gaussian_sketch(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Randomized truncated SVD with subspace iteration.
///
/// Deterministic for a given matrix and seed. Each singular-vector pair is
/// signed so the largest-magnitude entry of the `u` column is positive.
pub fn truncated_svd(m: &SparseMatrix, p: &TsvdParams) -> Result<TsvdResult> {
    p.validate(m.rows(), m.cols())?;
    let mt = m.transpose();

    let omega = gaussian_sketch(m.cols(), p.sketch_width(), p.seed);
    let mut y = m.spmm_dense(&omega)?;
    let max_rounds = match p.tol {
        Some(_) => p.max_power_iters.max(p.power_iters),
        None => p.power_iters,
    };
    let mut prev_ritz: Option<Vec<f64>> = None;
    let mut iterations = 0;
    while iterations < max_rounds {
        let q = qr_thin(&y)?.0;
        // The R factor of Mᵀ Q carries the current Ritz values.
        let (z, r) = qr_thin(&mt.spmm_dense(&q)?)?;
        y = m.spmm_dense(&z)?;
        iterations += 1;
        if let Some(tol) = p.tol {
            let ritz = dense_svd_small(&r)?.1[..p.k].to_vec();
            let converged = prev_ritz
                .as_ref()
                .is_some_and(|prev| max_relative_change(prev, &ritz) <= tol);
            if converged && iterations >= p.power_iters {
                break;
            }
            prev_ritz = Some(ritz);
        }
    }
    let q = qr_thin(&y)?.0;

    // B = Qᵀ M, handed to the small SVD as its transpose Mᵀ Q.
    let bt = mt.spmm_dense(&q)?;
    let (v_b, s_b, u_b) = dense_svd_small(&bt)?;

    let mut u = q.matmul(&u_b)?.leading_columns(p.k);
    let mut v = v_b.leading_columns(p.k);
    let s = s_b[..p.k].to_vec();
    canonicalize_signs(&mut u, &mut v);
    Ok(TsvdResult {
        u,
        s,
        v,
        iterations,
    })
}

fn max_relative_change(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter()
        .zip(cur)
        .map(|(&a, &b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

fn canonicalize_signs(u: &mut DenseMatrix, v: &mut DenseMatrix) {
    for j in 0..u.cols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..u.rows() {
            let x = u[(i, j)];
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}
