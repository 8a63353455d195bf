use rayon::prelude::*;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row and no explicit
/// zeros are stored. Every constructor enforces this.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from raw CSR arrays, validating every invariant.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds from (row, col, value) triplets. Duplicates are summed and
    /// resulting zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::dims(
                    "from_triplets",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("from_triplets"));
            }
            per_row[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut entries in per_row {
            entries.sort_by_key(|&(c, _)| c);
            let mut k = 0;
            while k < entries.len() {
                let c = entries[k].0;
                let mut acc = 0.0;
                while k < entries.len() && entries[k].0 == c {
                    acc += entries[k].1;
                    k += 1;
                }
                if acc != 0.0 {
                    col_idx.push(c);
                    values.push(acc);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.rows() {
            for (j, &v) in d.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            rows: d.rows(),
            cols: d.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCsr(msg));
        if self.row_ptr.len() != self.rows + 1 {
            return bad(format!(
                "row_ptr has length {} for {} rows",
                self.row_ptr.len(),
                self.rows
            ));
        }
        if self.row_ptr[0] != 0 {
            return bad("row_ptr[0] != 0".into());
        }
        if self.col_idx.len() != self.values.len() || self.row_ptr[self.rows] != self.values.len()
        {
            return bad("row_ptr, col_idx and values disagree on nnz".into());
        }
        for r in 0..self.rows {
            let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
            if lo > hi {
                return bad(format!("row_ptr decreases at row {r}"));
            }
            let cols = &self.col_idx[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("row {r} columns not strictly increasing"));
            }
            if cols.last().is_some_and(|&c| c >= self.cols) {
                return bad(format!("row {r} has a column index out of range"));
            }
        }
        if let Some(k) = self.values.iter().position(|&v| v == 0.0) {
            return bad(format!("explicit zero stored at position {k}"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value stored".into());
        }
        Ok(())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// Largest |m[i][j] − m[j][i]|; `None` if not square.
    pub fn max_asymmetry(&self) -> Option<f64> {
        if self.rows != self.cols {
            return None;
        }
        let t = self.transpose();
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            let (ca, va) = self.row(r);
            let (cb, vb) = t.row(r);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let d = match (ca.get(p), cb.get(q)) {
                    (Some(&x), Some(&y)) if x == y => {
                        p += 1;
                        q += 1;
                        va[p - 1] - vb[q - 1]
                    }
                    (Some(&x), Some(&y)) if x < y => {
                        p += 1;
                        va[p - 1]
                    }
                    (Some(_), None) => {
                        p += 1;
                        va[p - 1]
                    }
                    _ => {
                        q += 1;
                        vb[q - 1]
                    }
                };
                worst = worst.max(d.abs());
            }
        }
        Some(worst)
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Visiting source rows in order keeps each output row sorted.
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = next[c];
                col_idx[k] = r;
                values[k] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Exact sparse product `self · other` (Gustavson, dense row accumulator).
    pub fn spmm(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        self.spmm_with_drop(other, 0.0)
    }

    /// Sparse product that removes entries with magnitude `<= drop_tol`.
    /// Exact zeros are always removed.
    pub fn spmm_with_drop(&self, other: &SparseMatrix, drop_tol: f64) -> Result<SparseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "spmm",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let n = other.cols;
        let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..self.rows)
            .into_par_iter()
            .map_init(
                || (vec![0.0f64; n], vec![false; n], Vec::<usize>::new()),
                |(acc, seen, touched), r| {
                    let (ac, av) = self.row(r);
                    for (&k, &a) in ac.iter().zip(av) {
                        let (bc, bv) = other.row(k);
                        for (&c, &b) in bc.iter().zip(bv) {
                            if !seen[c] {
                                seen[c] = true;
                                touched.push(c);
                            }
                            acc[c] += a * b;
                        }
                    }
                    touched.sort_unstable();
                    let mut cols = Vec::with_capacity(touched.len());
                    let mut vals = Vec::with_capacity(touched.len());
                    for &c in touched.iter() {
                        let v = acc[c];
                        if v != 0.0 && v.abs() > drop_tol {
                            cols.push(c);
                            vals.push(v);
                        }
                        acc[c] = 0.0;
                        seen[c] = false;
                    }
                    touched.clear();
                    (cols, vals)
                },
            )
            .collect();
        let mut row_ptr = Vec::with_capacity(self.rows + 1);
        row_ptr.push(0);
        let total = rows.iter().map(|(c, _)| c.len()).sum();
        let mut col_idx = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for (c, v) in rows {
            col_idx.extend(c);
            values.extend(v);
            row_ptr.push(col_idx.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: n,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `self · b` for dense `b`.
    pub fn spmm_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows() {
            return Err(Error::dims(
                "spmm_dense",
                format!(
                    "{}x{} times {}x{}",
                    self.rows,
                    self.cols,
                    b.rows(),
                    b.cols()
                ),
            ));
        }
        let n = b.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        if n == 0 {
            return Ok(out);
        }
        out.data_mut()
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(r, out_row)| {
                let (cols, vals) = self.row(r);
                for (&k, &a) in cols.iter().zip(vals) {
                    for (o, &x) in out_row.iter_mut().zip(b.row(k)) {
                        *o += a * x;
                    }
                }
            });
        Ok(out)
    }

    /// `selfᵀ · b` for dense `b`, without forming the transpose.
    pub fn t_spmm_dense(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows() {
            return Err(Error::dims(
                "t_spmm_dense",
                format!(
                    "({}x{})ᵀ times {}x{}",
                    self.rows,
                    self.cols,
                    b.rows(),
                    b.cols()
                ),
            ));
        }
        // The scatter form is serial; the transpose keeps it parallel and
        // deterministic.
        self.transpose().spmm_dense(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_row_vector() {
        let m = SparseMatrix::from_triplets(1, 2, [(0, 1, 1.0)]).unwrap();
        let t = m.transpose();
        assert_eq!((t.rows(), t.cols()), (2, 1));
        assert_eq!(t.to_dense().data(), &[0.0, 1.0]);
        t.validate().unwrap();
    }

    #[test]
    fn permutation_squared_is_identity() {
        let p = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(p.spmm(&p).unwrap(), SparseMatrix::identity(2));
    }

    #[test]
    fn triplets_sum_duplicates_and_drop_zeros() {
        let m =
            SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (0, 0, -1.0), (1, 1, 2.0), (1, 1, 1.0)])
                .unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(1, 1), 3.0);
        m.validate().unwrap();
    }

    #[test]
    fn from_csr_rejects_bad_structure() {
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 1], vec![1], vec![0.0]).is_err());
        assert!(SparseMatrix::from_csr(1, 3, vec![0, 1], vec![3], vec![1.0]).is_err());
        assert!(SparseMatrix::from_csr(2, 3, vec![0, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn spmm_dimension_mismatch() {
        let a = SparseMatrix::zeros(2, 3);
        assert!(matches!(
            a.spmm(&SparseMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(a.spmm_dense(&DenseMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn drop_tolerance_prunes_small_entries() {
        let a = SparseMatrix::from_triplets(1, 2, [(0, 0, 1.0), (0, 1, 1e-3)]).unwrap();
        let b = SparseMatrix::identity(2);
        assert_eq!(a.spmm_with_drop(&b, 1e-2).unwrap().nnz(), 1);
        assert_eq!(a.spmm_with_drop(&b, 0.0).unwrap().nnz(), 2);
    }

    #[test]
    fn zero_times_dense_is_zero() {
        let b = DenseMatrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let out = SparseMatrix::zeros(4, 3).spmm_dense(&b).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(SparseMatrix::identity(3).spmm_dense(&b).unwrap(), b);
    }
}
