//! Interaction ingestion and the normalized bipartite adjacency.
//!
//! Node ids in the symmetrized graph place users first (`0..m`) and items
//! after them (`m..m+n`). The embedder relies on this layout.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::matrix::SparseMatrix;

/// Per-user item lists as read from one interaction file. `lists[u]` is
/// `None` when user `u` has no line in the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserItemLists {
    pub lists: Vec<Option<Vec<usize>>>,
}

impl UserItemLists {
    pub fn max_user(&self) -> Option<usize> {
        self.lists.iter().rposition(Option::is_some)
    }

    pub fn max_item(&self) -> Option<usize> {
        self.lists
            .iter()
            .flatten()
            .filter_map(|items| items.last().copied())
            .max()
    }

    pub fn num_interactions(&self) -> usize {
        self.lists.iter().flatten().map(Vec::len).sum()
    }

    pub fn items(&self, user: usize) -> &[usize] {
        self.lists
            .get(user)
            .and_then(|l| l.as_deref())
            .unwrap_or(&[])
    }
}

/// Reads a file where each non-empty line is `<user> <item> <item> ...`.
pub fn parse_interaction_file(path: impl AsRef<Path>) -> Result<UserItemLists> {
    let path = path.as_ref();
    parse_interactions(File::open(path)?, path)
}

pub fn parse_interactions(reader: impl Read, label: &Path) -> Result<UserItemLists> {
    let mut out = UserItemLists::default();
    let err = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from(label),
        line,
        msg,
    };
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(first) = tokens.next() else {
            continue;
        };
        let user: usize = first
            .parse()
            .map_err(|_| err(lineno, format!("invalid user id {first:?}")))?;
        let mut items = tokens
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| err(lineno, format!("invalid item id {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        items.sort_unstable();
        items.dedup();
        if out.lists.len() <= user {
            out.lists.resize(user + 1, None);
        }
        if out.lists[user].is_some() {
            return Err(err(lineno, format!("user {user} appears more than once")));
        }
        out.lists[user] = Some(items);
    }
    Ok(out)
}

/// Train/test split over `num_users × num_items`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Builds a dataset from per-user train and test lists. Lists need not be
    /// sorted; duplicates are collapsed.
    pub fn new(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<usize>>,
        mut test: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if train.len() > num_users || test.len() > num_users {
            return Err(Error::InvalidParam(format!(
                "more user lists than the {num_users} declared users"
            )));
        }
        train.resize(num_users, Vec::new());
        test.resize(num_users, Vec::new());
        for (u, (tr, te)) in train.iter_mut().zip(test.iter_mut()).enumerate() {
            for l in [&mut *tr, &mut *te] {
                l.sort_unstable();
                l.dedup();
                if l.last().is_some_and(|&i| i >= num_items) {
                    return Err(Error::InvalidParam(format!(
                        "user {u} references an item id >= {num_items}"
                    )));
                }
            }
            if let Some(i) = tr.iter().find(|i| te.binary_search(i).is_ok()) {
                return Err(Error::InvalidParam(format!(
                    "item {i} is in both train and test for user {u}"
                )));
            }
        }
        Ok(InteractionDataset {
            num_users,
            num_items,
            train,
            test,
        })
    }

    /// Sizes the id spaces from the largest ids seen in either split.
    pub fn from_lists(train: &UserItemLists, test: &UserItemLists) -> Result<Self> {
        let num_users = train
            .max_user()
            .into_iter()
            .chain(test.max_user())
            .max()
            .map_or(0, |u| u + 1);
        let num_items = train
            .max_item()
            .into_iter()
            .chain(test.max_item())
            .max()
            .map_or(0, |i| i + 1);
        let collect = |l: &UserItemLists| (0..num_users).map(|u| l.items(u).to_vec()).collect();
        InteractionDataset::new(num_users, num_items, collect(train), collect(test))
    }

    pub fn load(train_path: impl AsRef<Path>, test_path: impl AsRef<Path>) -> Result<Self> {
        let train = parse_interaction_file(train_path)?;
        let test = parse_interaction_file(test_path)?;
        InteractionDataset::from_lists(&train, &test)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn train(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    pub fn test(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn num_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn num_test(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn num_interactions(&self) -> usize {
        self.num_train() + self.num_test()
    }

    pub fn density(&self) -> f64 {
        self.num_interactions() as f64 / (self.num_users as f64 * self.num_items as f64)
    }
}

/// Weighted degree of every node of the symmetrized graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeVector(pub Vec<f64>);

impl DegreeVector {
    pub fn of(a_sym: &SparseMatrix) -> Self {
        DegreeVector(
            (0..a_sym.rows())
                .map(|r| a_sym.row(r).1.iter().sum())
                .collect(),
        )
    }
}

/// Binary `m×n` user-item matrix of the train split.
pub fn build_adjacency(d: &InteractionDataset) -> SparseMatrix {
    let mut row_ptr = Vec::with_capacity(d.num_users + 1);
    let mut col_idx = Vec::with_capacity(d.num_train());
    row_ptr.push(0);
    for items in &d.train {
        col_idx.extend_from_slice(items);
        row_ptr.push(col_idx.len());
    }
    let values = vec![1.0; col_idx.len()];
    SparseMatrix::from_csr(d.num_users, d.num_items, row_ptr, col_idx, values)
        .expect("dataset invariants give valid CSR")
}

/// `[[0, A], [Aᵀ, 0]]`.
pub fn symmetrize(a: &SparseMatrix) -> SparseMatrix {
    let (m, n) = (a.rows(), a.cols());
    let at = a.transpose();
    let mut row_ptr = Vec::with_capacity(m + n + 1);
    let mut col_idx = Vec::with_capacity(2 * a.nnz());
    let mut values = Vec::with_capacity(2 * a.nnz());
    row_ptr.push(0);
    for r in 0..m {
        let (cols, vals) = a.row(r);
        col_idx.extend(cols.iter().map(|&c| c + m));
        values.extend_from_slice(vals);
        row_ptr.push(col_idx.len());
    }
    for r in 0..n {
        let (cols, vals) = at.row(r);
        col_idx.extend_from_slice(cols);
        values.extend_from_slice(vals);
        row_ptr.push(col_idx.len());
    }
    SparseMatrix::from_csr(m + n, m + n, row_ptr, col_idx, values)
        .expect("block layout preserves CSR invariants")
}

/// `D^{-1/2} A' D^{-1/2}`, with `0^{-1/2}` taken as 0.
pub fn laplacian_normalize(a_sym: &SparseMatrix) -> Result<SparseMatrix> {
    if a_sym.rows() != a_sym.cols() {
        return Err(Error::dims(
            "laplacian_normalize",
            format!("{}x{} is not square", a_sym.rows(), a_sym.cols()),
        ));
    }
    for r in 0..a_sym.rows() {
        let (cols, vals) = a_sym.row(r);
        if let Some(k) = vals.iter().position(|&v| v < 0.0) {
            return Err(Error::NegativeEntry {
                row: r,
                col: cols[k],
            });
        }
    }
    let deg = DegreeVector::of(a_sym).0;
    // d_x·d_y commutes, so (x, y) and (y, x) get bit-identical values.
    let mut values = Vec::with_capacity(a_sym.nnz());
    for r in 0..a_sym.rows() {
        let (cols, vals) = a_sym.row(r);
        values.extend(
            cols.iter()
                .zip(vals)
                .map(|(&c, &v)| v / (deg[r] * deg[c]).sqrt()),
        );
    }
    SparseMatrix::from_csr(
        a_sym.rows(),
        a_sym.cols(),
        a_sym.row_ptr().to_vec(),
        a_sym.col_idx().to_vec(),
        values,
    )
}

/// Exact square of the normalized adjacency.
pub fn matrix_power2(a_norm: &SparseMatrix) -> Result<SparseMatrix> {
    matrix_power2_with_drop(a_norm, 0.0)
}

/// Square with entries of magnitude `<= drop_tol` pruned.
pub fn matrix_power2_with_drop(a_norm: &SparseMatrix, drop_tol: f64) -> Result<SparseMatrix> {
    if a_norm.rows() != a_norm.cols() {
        return Err(Error::dims(
            "matrix_power2",
            format!("{}x{} is not square", a_norm.rows(), a_norm.cols()),
        ));
    }
    a_norm.spmm_with_drop(a_norm, drop_tol)
}

/// Normalized adjacency (and optionally its square) for a dataset.
pub struct GraphMatrices {
    pub adjacency: SparseMatrix,
    pub normalized: SparseMatrix,
    pub normalized_sq: Option<SparseMatrix>,
}

pub fn build_graph(d: &InteractionDataset, with_square: bool) -> Result<GraphMatrices> {
    let adjacency = build_adjacency(d);
    let normalized = laplacian_normalize(&symmetrize(&adjacency))?;
    let normalized_sq = if with_square {
        Some(matrix_power2(&normalized)?)
    } else {
        None
    };
    Ok(GraphMatrices {
        adjacency,
        normalized,
        normalized_sq,
    })
}
