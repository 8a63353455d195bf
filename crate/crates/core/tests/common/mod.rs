//! Independent reference implementations used only by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svdrec::graph::InteractionDataset;
use svdrec::matrix::{DenseMatrix, SparseMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Plain triple loop.
pub fn dense_mul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    assert_eq!(a.cols(), b.rows());
    let mut out = DenseMatrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for p in 0..a.cols() {
                acc += a[(i, p)] * b[(p, j)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

pub fn random_sparse(rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.random::<f64>() < density {
                t.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

pub fn random_dense(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Cyclic two-sided Jacobi eigensolver for a symmetric matrix. Returns
/// eigenvalues sorted descending and eigenvectors as columns.
pub fn jacobi_eigen(a: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut v = DenseMatrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = m.frobenius_norm().powi(2).max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let vals = order.iter().map(|&i| m[(i, i)]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    (vals, vecs)
}

/// Singular values (descending) from the eigenvalues of the smaller Gram
/// matrix.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let at = a.transpose();
    let gram = if a.rows() <= a.cols() {
        dense_mul(a, &at)
    } else {
        dense_mul(&at, a)
    };
    jacobi_eigen(&gram)
        .0
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

pub fn orthonormality_error(q: &DenseMatrix) -> f64 {
    let g = dense_mul(&q.transpose(), q);
    g.max_abs_diff(&DenseMatrix::identity(q.cols()))
}

/// Random bipartite graph that is connected: a spanning path alternating
/// users and items plus random extra edges.
pub fn connected_bipartite(users: usize, items: usize, extra: f64, rng: &mut impl Rng) -> InteractionDataset {
    let mut train = vec![Vec::new(); users];
    for u in 0..users {
        train[u].push(u % items);
        train[u].push((u + 1) % items);
    }
    for i in 0..items {
        train[i % users].push(i);
    }
    for u in 0..users {
        for i in 0..items {
            if rng.random::<f64>() < extra {
                train[u].push(i);
            }
        }
    }
    InteractionDataset::new(users, items, train, vec![]).unwrap()
}

/// Principal angles (radians) between the column spaces of two
/// orthonormal bases.
pub fn principal_angles(a: &DenseMatrix, b: &DenseMatrix) -> Vec<f64> {
    let m = dense_mul(&a.transpose(), b);
    singular_values(&m)
        .into_iter()
        .map(|c| c.clamp(-1.0, 1.0).acos())
        .collect()
}

/// Two communities; each user draws `n_train + n_test` distinct items from its
/// own community's items.
pub fn two_community_dataset(
    users: usize,
    items: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> InteractionDataset {
    use rand::seq::SliceRandom;
    let mut r = rng(seed);
    let (hu, hi) = (users / 2, items / 2);
    let mut train = Vec::with_capacity(users);
    let mut test = Vec::with_capacity(users);
    for u in 0..users {
        let base = if u < hu { 0 } else { hi };
        let mut pool: Vec<usize> = (base..base + hi).collect();
        pool.shuffle(&mut r);
        train.push(pool[..n_train].to_vec());
        test.push(pool[n_train..n_train + n_test].to_vec());
    }
    InteractionDataset::new(users, items, train, test).unwrap()
}
