mod common;

use common::*;
use proptest::prelude::*;
use svdrec::matrix::{dense_svd_small, qr_thin, DenseMatrix, SparseMatrix};

fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let diff = DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)] - b[(i, j)]);
    diff.frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

#[test]
fn transpose_small_and_involution() {
    let m = SparseMatrix::from_triplets(1, 2, vec![(0, 1, 1.0)]).unwrap();
    let t = m.transpose();
    assert_eq!((t.rows(), t.cols()), (2, 1));
    assert_eq!(t.to_dense().data(), &[0.0, 1.0]);

    let mut r = rng(3);
    let a = random_sparse(50, 30, 0.1, &mut r);
    assert_eq!(a.transpose().transpose(), a);
    a.transpose().validate().unwrap();
}

#[test]
fn spmm_examples() {
    let p = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
    assert_eq!(p.spmm(&p).unwrap(), SparseMatrix::identity(2));

    let mut r = rng(4);
    let a = random_sparse(25, 17, 0.2, &mut r);
    assert_eq!(a.spmm(&SparseMatrix::identity(17)).unwrap(), a);
    assert!(a.spmm(&a).is_err());
}

#[test]
fn spmm_matches_dense_oracle() {
    let mut r = rng(5);
    for _ in 0..5 {
        let a = random_sparse(40, 40, 0.1, &mut r);
        let b = random_sparse(40, 40, 0.1, &mut r);
        let c = a.spmm(&b).unwrap();
        c.validate().unwrap();
        let oracle = dense_mul(&a.to_dense(), &b.to_dense());
        assert!(c.to_dense().max_abs_diff(&oracle) <= 1e-12);
    }
}

#[test]
fn spmm_drop_tolerance_prunes_small_entries() {
    let mut r = rng(6);
    let a = random_sparse(30, 30, 0.2, &mut r);
    let exact = a.spmm(&a).unwrap();
    let pruned = a.spmm_with_drop(&a, 0.1).unwrap();
    assert!(pruned.values().iter().all(|v| v.abs() > 0.1));
    assert!(pruned.nnz() <= exact.nnz());
}

#[test]
fn spmm_dense_examples() {
    let mut r = rng(7);
    let b = random_dense(20, 5, &mut r);
    assert_eq!(SparseMatrix::identity(20).spmm_dense(&b).unwrap(), b);
    let z = SparseMatrix::zeros(30, 20).spmm_dense(&b).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));

    let a = random_sparse(30, 20, 0.2, &mut r);
    let got = a.spmm_dense(&b).unwrap();
    assert!(got.max_abs_diff(&dense_mul(&a.to_dense(), &b)) <= 1e-12);
    let c = random_dense(30, 4, &mut r);
    let got_t = a.t_spmm_dense(&c).unwrap();
    assert!(got_t.max_abs_diff(&dense_mul(&a.to_dense().transpose(), &c)) <= 1e-12);
}

#[test]
fn spmm_associativity() {
    let mut r = rng(8);
    for _ in 0..5 {
        let a = random_sparse(30, 25, 0.15, &mut r);
        let b = random_sparse(25, 35, 0.15, &mut r);
        let c = random_sparse(35, 20, 0.15, &mut r);
        let left = a.spmm(&b).unwrap().spmm(&c).unwrap().to_dense();
        let right = a.spmm(&b.spmm(&c).unwrap()).unwrap().to_dense();
        if right.frobenius_norm() > 0.0 {
            assert!(rel_frob(&left, &right) <= 1e-10);
        }
    }
}

#[test]
fn qr_examples() {
    let (q, r) = qr_thin(&DenseMatrix::identity(4)).unwrap();
    assert!(q.max_abs_diff(&DenseMatrix::identity(4)) <= 1e-15);
    assert!(r.max_abs_diff(&DenseMatrix::identity(4)) <= 1e-15);

    let (q, r) = qr_thin(&DenseMatrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap()).unwrap();
    assert!((q[(0, 0)] - 0.6).abs() < 1e-15 && (q[(1, 0)] - 0.8).abs() < 1e-15);
    assert!((r[(0, 0)] - 5.0).abs() < 1e-14);

    assert!(qr_thin(&DenseMatrix::zeros(2, 3)).is_err());
}

#[test]
fn qr_random_residuals() {
    let mut g = rng(9);
    let a = random_dense(100, 10, &mut g);
    let (q, r) = qr_thin(&a).unwrap();
    assert!(rel_frob(&dense_mul(&q, &r), &a) <= 1e-12);
    assert!(orthonormality_error(&q) <= 1e-12);
    for i in 0..r.rows() {
        assert!(r[(i, i)] >= 0.0);
        for j in 0..i {
            assert_eq!(r[(i, j)], 0.0);
        }
    }
}

#[test]
fn qr_orthonormal_up_to_1000_by_64() {
    let mut g = rng(10);
    for (m, n) in [(1000, 64), (500, 32), (64, 64)] {
        let a = random_dense(m, n, &mut g);
        let (q, r) = qr_thin(&a).unwrap();
        assert!(orthonormality_error(&q) <= 1e-10, "{m}x{n}");
        assert!(rel_frob(&q.matmul(&r).unwrap(), &a) <= 1e-10);
    }
}

#[test]
fn dense_svd_examples() {
    let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let (_, s, _) = dense_svd_small(&a).unwrap();
    assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);

    let x = [1.0, 2.0, 2.0];
    let y = [3.0, 4.0, 0.0, 0.0];
    let outer = DenseMatrix::from_fn(3, 4, |i, j| x[i] * y[j]);
    let (_, s, _) = dense_svd_small(&outer).unwrap();
    assert!((s[0] - 15.0).abs() < 1e-12);
    assert!(s[1].abs() < 1e-12);

    let mut bad = DenseMatrix::zeros(2, 2);
    bad[(0, 0)] = f64::NAN;
    assert!(dense_svd_small(&bad).is_err());
}

#[test]
fn dense_svd_matches_eigen_oracle() {
    let mut g = rng(11);
    for (m, n) in [(8, 12), (12, 8), (5, 5), (1, 7)] {
        let a = random_dense(m, n, &mut g);
        let (u, s, v) = dense_svd_small(&a).unwrap();
        let oracle = singular_values(&a);
        for (got, want) in s.iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-9, "{m}x{n}: {got} vs {want}");
        }
        assert!(s.windows(2).all(|w| w[0] >= w[1]) && s.iter().all(|&x| x >= 0.0));
        assert!(orthonormality_error(&u) <= 1e-10);
        assert!(orthonormality_error(&v) <= 1e-10);
        let rebuilt = dense_mul(&u.scale_columns(&s).unwrap(), &v.transpose());
        assert!(rel_frob(&rebuilt, &a) <= 1e-10);
    }
}

#[test]
fn dense_svd_rank_deficient_keeps_orthonormal_factors() {
    let mut g = rng(12);
    let b = random_dense(3, 10, &mut g);
    let a = DenseMatrix::from_fn(6, 10, |i, j| b[(i % 3, j)]);
    let (u, s, v) = dense_svd_small(&a).unwrap();
    assert!(s[3..].iter().all(|&x| x < 1e-12));
    assert!(orthonormality_error(&u) <= 1e-10);
    assert!(orthonormality_error(&v) <= 1e-10);
}

fn sparse_strategy() -> impl Strategy<Value = SparseMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        proptest::collection::vec((0..r, 0..c, -5.0f64..5.0), 0..40)
            .prop_map(move |t| SparseMatrix::from_triplets(r, c, t).unwrap())
    })
}

fn dense_strategy() -> impl Strategy<Value = DenseMatrix> {
    (1usize..10, 1usize..10).prop_flat_map(|(r, c)| {
        proptest::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |d| DenseMatrix::from_vec(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn csr_constructors_keep_invariants(m in sparse_strategy()) {
        m.validate().unwrap();
        m.transpose().validate().unwrap();
        prop_assert!(m.values().iter().all(|&v| v != 0.0));
        SparseMatrix::from_dense(&m.to_dense()).validate().unwrap();
        prop_assert_eq!(SparseMatrix::from_dense(&m.to_dense()), m.clone());
        let sq = m.spmm(&m.transpose()).unwrap();
        sq.validate().unwrap();
        prop_assert!(sq.max_asymmetry().unwrap() <= 1e-12);
    }

    #[test]
    fn singular_values_preserve_frobenius_norm(a in dense_strategy()) {
        let (_, s, _) = dense_svd_small(&a).unwrap();
        let sum: f64 = s.iter().map(|x| x * x).sum();
        let fro = a.frobenius_norm().powi(2);
        prop_assert!((sum - fro).abs() <= 1e-9 * fro.max(1e-300));
    }

    #[test]
    fn qr_reconstructs(a in dense_strategy()) {
        let a = if a.rows() < a.cols() { a.transpose() } else { a };
        let (q, r) = qr_thin(&a).unwrap();
        prop_assert!(orthonormality_error(&q) <= 1e-10);
        prop_assert!(q.matmul(&r).unwrap().max_abs_diff(&a) <= 1e-10 * a.frobenius_norm().max(1.0));
    }
}
