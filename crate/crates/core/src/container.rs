//! Binary artifact container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "SVDRART\0"
//! version    u8       FORMAT_VERSION
//! kind       u8       PayloadKind
//! reserved   2 bytes  zero
//! ndims      u32
//! dims       ndims × u64
//! nindex     u64
//! index      nindex × u64
//! nvalues    u64
//! values     nvalues × f64
//! checksum   u32      CRC-32 of every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::embed::{EmbeddingTable, Method};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::matrix::{DenseMatrix, SparseMatrix};
use crate::model::ModelParams;

pub const MAGIC: &[u8; 8] = b"SVDRART\0";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum PayloadKind {
    SparseMatrix = 1,
    EmbeddingTable = 2,
    ModelCheckpoint = 3,
    EvalReport = 4,
}

impl PayloadKind {
    fn from_u8(b: u8) -> Result<Self> {
        Ok(match b {
            1 => PayloadKind::SparseMatrix,
            2 => PayloadKind::EmbeddingTable,
            3 => PayloadKind::ModelCheckpoint,
            4 => PayloadKind::EvalReport,
            other => return Err(Error::Format(format!("unknown payload kind {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: PayloadKind,
    pub dims: Vec<u64>,
    pub index: Vec<u64>,
    pub values: Vec<f64>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(
            32 + 8 * (self.dims.len() + self.index.len() + self.values.len()),
        );
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.push(self.kind as u8);
        buf.extend_from_slice(&[0, 0]);
        buf.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
        buf.extend_from_slice(&(self.index.len() as u64).to_le_bytes());
        for i in &self.index {
            buf.extend_from_slice(&i.to_le_bytes());
        }
        buf.extend_from_slice(&(self.values.len() as u64).to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Format("truncated container".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Format("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        let kind = PayloadKind::from_u8(r.take(1)?[0])?;
        r.take(2)?;
        let ndims = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let dims = r.u64s(ndims)?;
        let nindex = r.u64()? as usize;
        let index = r.u64s(nindex)?;
        let nvalues = r.u64()? as usize;
        let values = r
            .u64s(nvalues)?
            .into_iter()
            .map(f64::from_bits)
            .collect();
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Ok(Container {
            kind,
            dims,
            index,
            values,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Container::from_bytes(&fs::read(path)?)
    }

    fn expect(&self, kind: PayloadKind, ndims: usize) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Format(format!(
                "expected {kind:?} payload, found {:?}",
                self.kind
            )));
        }
        if self.dims.len() != ndims {
            return Err(Error::Format(format!(
                "{kind:?} needs {ndims} dims, found {}",
                self.dims.len()
            )));
        }
        Ok(())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u64s(&mut self, n: usize) -> Result<Vec<u64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn to_usize(x: u64) -> Result<usize> {
    usize::try_from(x).map_err(|_| Error::Format(format!("value {x} does not fit usize")))
}

impl From<&SparseMatrix> for Container {
    fn from(m: &SparseMatrix) -> Self {
        Container {
            kind: PayloadKind::SparseMatrix,
            dims: vec![m.rows() as u64, m.cols() as u64],
            index: m
                .row_ptr()
                .iter()
                .chain(m.col_idx())
                .map(|&x| x as u64)
                .collect(),
            values: m.values().to_vec(),
        }
    }
}

impl TryFrom<&Container> for SparseMatrix {
    type Error = Error;

    fn try_from(c: &Container) -> Result<Self> {
        c.expect(PayloadKind::SparseMatrix, 2)?;
        let (rows, cols) = (to_usize(c.dims[0])?, to_usize(c.dims[1])?);
        if c.index.len() != rows + 1 + c.values.len() {
            return Err(Error::Format("sparse index length disagrees with dims".into()));
        }
        let idx = c.index.iter().map(|&x| to_usize(x)).collect::<Result<Vec<_>>>()?;
        let (row_ptr, col_idx) = idx.split_at(rows + 1);
        SparseMatrix::from_csr(rows, cols, row_ptr.to_vec(), col_idx.to_vec(), c.values.clone())
    }
}

impl From<&EmbeddingTable> for Container {
    fn from(e: &EmbeddingTable) -> Self {
        let mut values = Vec::with_capacity((e.num_users() + e.num_items()) * e.dim());
        values.extend_from_slice(e.users().data());
        values.extend_from_slice(e.items().data());
        Container {
            kind: PayloadKind::EmbeddingTable,
            dims: vec![
                e.num_users() as u64,
                e.num_items() as u64,
                e.dim() as u64,
                e.method.tag(),
            ],
            index: Vec::new(),
            values,
        }
    }
}

impl TryFrom<&Container> for EmbeddingTable {
    type Error = Error;

    fn try_from(c: &Container) -> Result<Self> {
        c.expect(PayloadKind::EmbeddingTable, 4)?;
        let (m, n, dim) = (to_usize(c.dims[0])?, to_usize(c.dims[1])?, to_usize(c.dims[2])?);
        let method = Method::from_tag(c.dims[3])
            .ok_or_else(|| Error::Format(format!("unknown method tag {}", c.dims[3])))?;
        if c.values.len() != (m + n) * dim {
            return Err(Error::Format("embedding payload length disagrees with dims".into()));
        }
        let (u, i) = c.values.split_at(m * dim);
        EmbeddingTable::new(
            method,
            DenseMatrix::from_vec(m, dim, u.to_vec())?,
            DenseMatrix::from_vec(n, dim, i.to_vec())?,
        )
    }
}

/// Model parameters plus the epoch they were taken from (0 = initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub epoch: usize,
}

impl From<&Checkpoint> for Container {
    fn from(ck: &Checkpoint) -> Self {
        let p = &ck.params;
        Container {
            kind: PayloadKind::ModelCheckpoint,
            dims: vec![
                p.input_dim() as u64,
                p.hidden() as u64,
                p.use_bias as u64,
                ck.epoch as u64,
            ],
            index: Vec::new(),
            values: p.tensors().concat(),
        }
    }
}

impl TryFrom<&Container> for Checkpoint {
    type Error = Error;

    fn try_from(c: &Container) -> Result<Self> {
        c.expect(PayloadKind::ModelCheckpoint, 4)?;
        let (d, h) = (to_usize(c.dims[0])?, to_usize(c.dims[1])?);
        let mut params = ModelParams::zeros(d, h);
        params.use_bias = c.dims[2] != 0;
        if c.values.len() != params.num_params() {
            return Err(Error::Format("checkpoint payload length disagrees with dims".into()));
        }
        let mut rest = c.values.as_slice();
        for t in params.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        params.validate()?;
        Ok(Checkpoint {
            params,
            epoch: to_usize(c.dims[3])?,
        })
    }
}

/// An evaluation report with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EvalRecord {
    pub method: Method,
    pub svd_dim: usize,
    pub hidden: usize,
    pub seed: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

impl From<&EvalRecord> for Container {
    fn from(r: &EvalRecord) -> Self {
        Container {
            kind: PayloadKind::EvalReport,
            dims: vec![
                r.report.k as u64,
                r.report.users_evaluated as u64,
                r.method.tag(),
                r.svd_dim as u64,
                r.hidden as u64,
                r.seed,
                r.epoch as u64,
            ],
            index: Vec::new(),
            values: vec![r.report.recall, r.report.ndcg],
        }
    }
}

impl TryFrom<&Container> for EvalRecord {
    type Error = Error;

    fn try_from(c: &Container) -> Result<Self> {
        c.expect(PayloadKind::EvalReport, 7)?;
        if c.values.len() != 2 {
            return Err(Error::Format("eval report needs 2 values".into()));
        }
        Ok(EvalRecord {
            method: Method::from_tag(c.dims[2])
                .ok_or_else(|| Error::Format(format!("unknown method tag {}", c.dims[2])))?,
            svd_dim: to_usize(c.dims[3])?,
            hidden: to_usize(c.dims[4])?,
            seed: c.dims[5],
            epoch: to_usize(c.dims[6])?,
            report: EvalReport {
                k: to_usize(c.dims[0])?,
                users_evaluated: to_usize(c.dims[1])?,
                recall: c.values[0],
                ndcg: c.values[1],
            },
        })
    }
}

/// Writes any value with a container encoding.
pub fn save<'a, T>(value: &'a T, path: impl AsRef<Path>) -> Result<()>
where
    Container: From<&'a T>,
{
    Container::from(value).write(path)
}

/// Reads and decodes a container, checking its kind.
pub fn load<T>(path: impl AsRef<Path>) -> Result<T>
where
    T: for<'c> TryFrom<&'c Container, Error = Error>,
{
    T::try_from(&Container::read(path)?)
}
