//! Python bindings. Matrices cross the boundary as nested lists of floats.

use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use svdrec_core::container::{self, Checkpoint};
use svdrec_core::embed::{self, Method};
use svdrec_core::eval::{self, CandidatePool};
use svdrec_core::graph::{self, InteractionDataset};
use svdrec_core::matrix::{DenseMatrix, SparseMatrix as CoreSparse};
use svdrec_core::model::{self, ModelParams};
use svdrec_core::train::{self, TrainConfig};
use svdrec_core::tsvd::{self, TsvdParams};
use svdrec_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::MissingArtifact(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows_of(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn dense_from(rows: Vec<Vec<f64>>, cols_if_empty: usize) -> PyResult<DenseMatrix> {
    if rows.is_empty() {
        return Ok(DenseMatrix::zeros(0, cols_if_empty));
    }
    DenseMatrix::from_rows(&rows).map_err(py_err)
}

fn parse_method(s: &str) -> PyResult<Method> {
    s.parse().map_err(py_err)
}

/// Sparse CSR matrix.
#[pyclass(name = "SparseMatrix", module = "svdrec", frozen)]
struct PySparse(CoreSparse);

#[pymethods]
impl PySparse {
    #[staticmethod]
    fn from_triplets(rows: usize, cols: usize, triplets: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        CoreSparse::from_triplets(rows, cols, triplets).map(PySparse).map_err(py_err)
    }

    #[staticmethod]
    fn from_dense(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PySparse(CoreSparse::from_dense(&dense_from(rows, 0)?)))
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.0.nnz()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.0.rows() || col >= self.0.cols() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(row, col))
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0.to_dense())
    }

    fn transpose(&self) -> Self {
        PySparse(self.0.transpose())
    }

    fn matmul(&self, other: &PySparse) -> PyResult<Self> {
        self.0.spmm(&other.0).map(PySparse).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        container::save(&self.0, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        container::load(path).map(PySparse).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("SparseMatrix(shape=({}, {}), nnz={})", self.0.rows(), self.0.cols(), self.0.nnz())
    }
}

/// Users, items and their train/test interactions.
#[pyclass(name = "Dataset", module = "svdrec", frozen)]
struct PyDataset(InteractionDataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(num_users: usize, num_items: usize, train: Vec<Vec<usize>>, test: Vec<Vec<usize>>) -> PyResult<Self> {
        InteractionDataset::new(num_users, num_items, train, test)
            .map(PyDataset)
            .map_err(py_err)
    }

    /// Reads whitespace-separated `user item item ...` files.
    #[staticmethod]
    fn load(train_file: &str, test_file: &str) -> PyResult<Self> {
        InteractionDataset::load(train_file, test_file).map(PyDataset).map_err(py_err)
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.0.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.0.num_items()
    }

    #[getter]
    fn num_train(&self) -> usize {
        self.0.num_train()
    }

    #[getter]
    fn num_test(&self) -> usize {
        self.0.num_test()
    }

    fn train(&self, user: usize) -> PyResult<Vec<usize>> {
        self.check(user)?;
        Ok(self.0.train(user).to_vec())
    }

    fn test(&self, user: usize) -> PyResult<Vec<usize>> {
        self.check(user)?;
        Ok(self.0.test(user).to_vec())
    }

    /// Returns `(adjacency, normalized, normalized_sq or None)`.
    #[pyo3(signature = (with_square = true))]
    fn graph(&self, with_square: bool) -> PyResult<(PySparse, PySparse, Option<PySparse>)> {
        let g = graph::build_graph(&self.0, with_square).map_err(py_err)?;
        Ok((PySparse(g.adjacency), PySparse(g.normalized), g.normalized_sq.map(PySparse)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(users={}, items={}, train={}, test={})",
            self.0.num_users(),
            self.0.num_items(),
            self.0.num_train(),
            self.0.num_test()
        )
    }
}

impl PyDataset {
    fn check(&self, user: usize) -> PyResult<()> {
        if user >= self.0.num_users() {
            return Err(PyValueError::new_err(format!("user {user} out of range")));
        }
        Ok(())
    }
}

/// Per-user and per-item SVD embedding rows.
#[pyclass(name = "EmbeddingTable", module = "svdrec", frozen)]
struct PyEmbeddings(embed::EmbeddingTable);

#[pymethods]
impl PyEmbeddings {
    #[new]
    #[pyo3(signature = (users, items, method = "ssb"))]
    fn new(users: Vec<Vec<f64>>, items: Vec<Vec<f64>>, method: &str) -> PyResult<Self> {
        let (u, i) = (dense_from(users, 0)?, dense_from(items, 0)?);
        embed::EmbeddingTable::new(parse_method(method)?, u, i)
            .map(PyEmbeddings)
            .map_err(py_err)
    }

    #[getter]
    fn method(&self) -> String {
        self.0.method.to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.0.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.0.num_items()
    }

    fn users(&self) -> Vec<Vec<f64>> {
        rows_of(self.0.users())
    }

    fn items(&self) -> Vec<Vec<f64>> {
        rows_of(self.0.items())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        container::save(&self.0, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        container::load(path).map(PyEmbeddings).map_err(py_err)
    }
}

/// Weights of the shared two-layer scoring network.
#[pyclass(name = "ModelParams", module = "svdrec", frozen)]
struct PyParams(ModelParams);

#[pymethods]
impl PyParams {
    #[staticmethod]
    #[pyo3(signature = (input_dim, hidden, seed = 0, use_bias = true))]
    fn init(input_dim: usize, hidden: usize, seed: u64, use_bias: bool) -> Self {
        let p = ModelParams::init(input_dim, hidden, seed);
        PyParams(if use_bias { p } else { p.without_bias() })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.0.hidden()
    }

    #[getter]
    fn w1(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0.w1)
    }

    #[getter]
    fn w2(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0.w2)
    }

    #[getter]
    fn b1(&self) -> Vec<f64> {
        self.0.b1.clone()
    }

    #[getter]
    fn b2(&self) -> Vec<f64> {
        self.0.b2.clone()
    }

    /// `[x | m1 | m2]` for one embedding row.
    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        model::forward(&self.0, &x).map(|r| r.concat).map_err(py_err)
    }

    fn score(&self, x_u: Vec<f64>, x_i: Vec<f64>) -> PyResult<f64> {
        model::score(&self.0, &x_u, &x_i).map_err(py_err)
    }

    /// BPR loss of one triple and its gradients as a dict of blocks.
    fn bpr_gradients<'py>(
        &self,
        py: Python<'py>,
        x_u: Vec<f64>,
        x_i: Vec<f64>,
        x_j: Vec<f64>,
    ) -> PyResult<(f64, Bound<'py, PyDict>)> {
        let (loss, g) = model::bpr_triple_gradients(&self.0, &x_u, &x_i, &x_j).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("w1", rows_of(&g.w1))?;
        d.set_item("b1", g.b1)?;
        d.set_item("w2", rows_of(&g.w2))?;
        d.set_item("b2", g.b2)?;
        Ok((loss, d))
    }

    #[pyo3(signature = (path, epoch = 0))]
    fn save(&self, path: &str, epoch: usize) -> PyResult<()> {
        let ck = Checkpoint { params: self.0.clone(), epoch };
        container::save(&ck, path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        container::load::<Checkpoint>(path).map(|c| PyParams(c.params)).map_err(py_err)
    }
}

/// Randomized truncated SVD; returns `(u, s, v)`.
#[pyfunction]
#[pyo3(signature = (matrix, k, oversampling = 10, power_iters = 7, seed = 0, tol = None))]
fn truncated_svd(
    py: Python<'_>,
    matrix: &PySparse,
    k: usize,
    oversampling: usize,
    power_iters: usize,
    seed: u64,
    tol: Option<f64>,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>)> {
    let mut p = TsvdParams::new(k)
        .with_oversampling(oversampling)
        .with_power_iters(power_iters)
        .with_seed(seed);
    if let Some(t) = tol {
        p = p.with_tol(t, TsvdParams::default().max_power_iters);
    }
    let f = py.detach(|| tsvd::truncated_svd(&matrix.0, &p)).map_err(py_err)?;
    Ok((rows_of(&f.u), f.s, rows_of(&f.v)))
}

/// SSB or TSA embeddings of a dataset's train graph.
#[pyfunction]
#[pyo3(signature = (dataset, method = "tsa", svd_dim = 64, seed = 0, oversampling = 10, power_iters = 7))]
fn compute_embeddings(
    py: Python<'_>,
    dataset: &PyDataset,
    method: &str,
    svd_dim: usize,
    seed: u64,
    oversampling: usize,
    power_iters: usize,
) -> PyResult<PyEmbeddings> {
    let method = parse_method(method)?;
    let d = &dataset.0;
    let table = py
        .detach(|| {
            let g = graph::build_graph(d, method == Method::Tsa)?;
            let p = TsvdParams::new(1)
                .with_seed(seed)
                .with_oversampling(oversampling)
                .with_power_iters(power_iters);
            embed::compute_embeddings(
                method,
                &g.normalized,
                g.normalized_sq.as_ref(),
                d.num_users(),
                d.num_items(),
                svd_dim,
                &p,
            )
        })
        .map_err(py_err)?;
    Ok(PyEmbeddings(table))
}

/// Trains the scoring network. Returns `(params, log)` where `log` holds
/// one dict per epoch; `params` is the best evaluated checkpoint when
/// evaluation ran, otherwise the final weights.
#[pyfunction]
#[pyo3(signature = (
    dataset, embeddings, epochs = 400, hidden = 512, batch_size = 1024,
    learning_rate = 1e-3, l2_reg = 1e-4, seed = 2022, eval_every = 10, k = 20, use_bias = true
))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    embeddings: &PyEmbeddings,
    epochs: usize,
    hidden: usize,
    batch_size: usize,
    learning_rate: f64,
    l2_reg: f64,
    seed: u64,
    eval_every: usize,
    k: usize,
    use_bias: bool,
) -> PyResult<(PyParams, Vec<Bound<'py, PyDict>>)> {
    let cfg = TrainConfig {
        batch_size,
        learning_rate,
        l2_reg,
        epochs,
        seed,
        eval_every,
        eval_k: k,
        hidden,
        use_bias,
    };
    let out = py
        .detach(|| train::fit(&dataset.0, &embeddings.0, &cfg))
        .map_err(py_err)?;
    let log = out
        .log
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("epoch", r.epoch)?;
            d.set_item("loss", r.loss)?;
            d.set_item("recall", r.recall)?;
            d.set_item("ndcg", r.ndcg)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((PyParams(out.selected_params().clone()), log))
}

/// Mean Recall@K and NDCG@K over users with test items.
#[pyfunction]
#[pyo3(signature = (params, embeddings, dataset, k = 20, test_only = false))]
fn evaluate<'py>(
    py: Python<'py>,
    params: &PyParams,
    embeddings: &PyEmbeddings,
    dataset: &PyDataset,
    k: usize,
    test_only: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let pool = if test_only { CandidatePool::TestOnly } else { CandidatePool::NonTrain };
    let r = py
        .detach(|| eval::evaluate_with(&params.0, &embeddings.0, &dataset.0, k, pool))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("k", r.k)?;
    d.set_item("recall", r.recall)?;
    d.set_item("ndcg", r.ndcg)?;
    d.set_item("users_evaluated", r.users_evaluated)?;
    Ok(d)
}

/// Best `k` non-train items for `user`, highest score first.
#[pyfunction]
fn top_k_items(params: &PyParams, embeddings: &PyEmbeddings, dataset: &PyDataset, user: usize, k: usize) -> PyResult<Vec<usize>> {
    eval::top_k_items(&params.0, &embeddings.0, &dataset.0, user, k).map_err(py_err)
}

#[pyfunction]
fn recall_at_k(ranked: Vec<usize>, test: Vec<usize>, k: usize) -> f64 {
    let mut t = test;
    t.sort_unstable();
    t.dedup();
    eval::recall_at_k(&ranked, &t, k)
}

#[pyfunction]
fn ndcg_at_k(ranked: Vec<usize>, test: Vec<usize>, k: usize) -> f64 {
    let mut t = test;
    t.sort_unstable();
    t.dedup();
    eval::ndcg_at_k(&ranked, &t, k)
}

#[pymodule]
#[pyo3(name = "svdrec")]
fn svdrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparse>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(truncated_svd, m)?)?;
    m.add_function(wrap_pyfunction!(compute_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_items, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    Ok(())
}
