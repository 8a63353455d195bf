//! Sparse (CSR) and dense matrices plus the factorization kernels used by
//! the embedding pipeline.

mod dense;
mod qr;
mod sparse;
mod svd;

pub use dense::{dot, DenseMatrix};
pub use qr::qr_thin;
pub use sparse::SparseMatrix;
pub use svd::dense_svd_small;
