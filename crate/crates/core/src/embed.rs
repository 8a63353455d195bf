//! Node embedding tables from truncated SVD factors.
//!
//! A node's embedding is its row of `u·diag(s)`. SSB uses the factors of the
//! normalized adjacency; TSA concatenates those with the factors of its
//! square, splitting the width evenly between the two hops.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};
use crate::tsvd::{truncated_svd, TsvdParams, TsvdResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// One-hop: SVD of the normalized adjacency.
    Ssb,
    /// Two-hop: SVD of the normalized adjacency and of its square.
    Tsa,
}

impl Method {
    pub fn tag(self) -> u64 {
        match self {
            Method::Ssb => 0,
            Method::Tsa => 1,
        }
    }

    pub fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(Method::Ssb),
            1 => Some(Method::Tsa),
            _ => None,
        }
    }

    /// Rank of each truncated SVD for a total embedding width.
    pub fn per_hop_rank(self, svd_dim: usize) -> Result<usize> {
        match self {
            Method::Ssb => Ok(svd_dim),
            Method::Tsa if svd_dim % 2 == 0 => Ok(svd_dim / 2),
            Method::Tsa => Err(Error::InvalidParam(format!(
                "TSA embedding width must be even, got {svd_dim}"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ssb => "ssb",
            Method::Tsa => "tsa",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssb" => Ok(Method::Ssb),
            "tsa" => Ok(Method::Tsa),
            other => Err(Error::InvalidParam(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub method: Method,
    users: DenseMatrix,
    items: DenseMatrix,
}

impl EmbeddingTable {
    pub fn new(method: Method, users: DenseMatrix, items: DenseMatrix) -> Result<Self> {
        if users.cols() != items.cols() {
            return Err(Error::dims(
                "EmbeddingTable::new",
                format!("user width {} vs item width {}", users.cols(), items.cols()),
            ));
        }
        if !users.is_finite() || !items.is_finite() {
            return Err(Error::NonFinite("EmbeddingTable::new"));
        }
        Ok(EmbeddingTable {
            method,
            users,
            items,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.rows()
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.users.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.items.row(i)
    }

    pub fn users(&self) -> &DenseMatrix {
        &self.users
    }

    pub fn items(&self) -> &DenseMatrix {
        &self.items
    }

    /// Keeps only the leading `dim` columns.
    pub fn truncated(&self, dim: usize) -> EmbeddingTable {
        EmbeddingTable {
            method: self.method,
            users: self.users.leading_columns(dim),
            items: self.items.leading_columns(dim),
        }
    }
}

fn scaled_rows(f: &TsvdResult, m: usize, n: usize) -> Result<DenseMatrix> {
    if f.u.rows() != m + n {
        return Err(Error::dims(
            "embeddings",
            format!("factor has {} rows, expected {} nodes", f.u.rows(), m + n),
        ));
    }
    f.u.scale_columns(&f.s)
}

fn split(all: &DenseMatrix, m: usize) -> (DenseMatrix, DenseMatrix) {
    let dim = all.cols();
    let n = all.rows() - m;
    let users = DenseMatrix::from_vec(m, dim, all.data()[..m * dim].to_vec()).unwrap();
    let items = DenseMatrix::from_vec(n, dim, all.data()[m * dim..].to_vec()).unwrap();
    (users, items)
}

/// One-hop embeddings: node rows of `u·diag(s)`, users first.
pub fn ssb_embeddings(f: &TsvdResult, m: usize, n: usize) -> Result<EmbeddingTable> {
    let (users, items) = split(&scaled_rows(f, m, n)?, m);
    EmbeddingTable::new(Method::Ssb, users, items)
}

/// Two-hop embeddings: `[row(f1) | row(f2)]` per node.
pub fn tsa_embeddings(
    f1: &TsvdResult,
    f2: &TsvdResult,
    m: usize,
    n: usize,
) -> Result<EmbeddingTable> {
    if f1.rank() != f2.rank() {
        return Err(Error::dims(
            "tsa_embeddings",
            format!("per-hop ranks differ: {} vs {}", f1.rank(), f2.rank()),
        ));
    }
    let one = scaled_rows(f1, m, n)?;
    let two = scaled_rows(f2, m, n)?;
    let k = f1.rank();
    let mut all = DenseMatrix::zeros(m + n, 2 * k);
    for x in 0..m + n {
        let row = all.row_mut(x);
        row[..k].copy_from_slice(one.row(x));
        row[k..].copy_from_slice(two.row(x));
    }
    let (users, items) = split(&all, m);
    EmbeddingTable::new(Method::Tsa, users, items)
}

/// Runs the truncated SVD(s) a method needs and assembles its table.
/// `normalized_sq` is required for TSA.
pub fn compute_embeddings(
    method: Method,
    normalized: &SparseMatrix,
    normalized_sq: Option<&SparseMatrix>,
    num_users: usize,
    num_items: usize,
    svd_dim: usize,
    base: &TsvdParams,
) -> Result<EmbeddingTable> {
    let params = TsvdParams {
        k: method.per_hop_rank(svd_dim)?,
        ..*base
    };
    let f1 = truncated_svd(normalized, &params)?;
    match method {
        Method::Ssb => ssb_embeddings(&f1, num_users, num_items),
        Method::Tsa => {
            let sq = normalized_sq.ok_or_else(|| {
                Error::InvalidParam("TSA needs the squared normalized adjacency".into())
            })?;
            let f2 = truncated_svd(sq, &params)?;
            tsa_embeddings(&f1, &f2, num_users, num_items)
        }
    }
}
