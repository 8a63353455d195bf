//! Pipeline stages behind the command-line interface.
//!
//! Every stage emits one JSON object per line on the supplied writer and
//! appends the same records to `metrics.jsonl` in the output directory.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines::{Dataset, PUBLISHED};
use crate::config::RunConfig;
use crate::container::{load, save, Checkpoint, EvalRecord};
use crate::embed::{compute_embeddings, EmbeddingTable, Method};
use crate::error::{Error, Result};
use crate::eval::evaluate_with;
use crate::graph::{
    build_adjacency, laplacian_normalize, matrix_power2_with_drop, symmetrize, InteractionDataset,
};
use crate::matrix::SparseMatrix;
use crate::model::ModelParams;
use crate::train::fit_with_callback;

/// File names inside the output directory.
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn adjacency(&self) -> PathBuf {
        self.root.join("adjacency.bin")
    }

    pub fn normalized(&self) -> PathBuf {
        self.root.join("normalized.bin")
    }

    pub fn normalized_sq(&self) -> PathBuf {
        self.root.join("normalized_sq.bin")
    }

    pub fn prepare_meta(&self) -> PathBuf {
        self.root.join("prepare.json")
    }

    pub fn embeddings(&self, tag: &str) -> PathBuf {
        self.root.join(format!("embeddings_{tag}.bin"))
    }

    pub fn checkpoint(&self, tag: &str) -> PathBuf {
        self.root.join(format!("checkpoint_{tag}.bin"))
    }

    pub fn train_log(&self, tag: &str) -> PathBuf {
        self.root.join(format!("train_log_{tag}.jsonl"))
    }

    pub fn eval_report(&self, tag: &str) -> PathBuf {
        self.root.join(format!("eval_{tag}.bin"))
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn lock(&self) -> PathBuf {
        self.root.join(".svdrec.lock")
    }
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        let path = Layout::new(out_dir).lock();
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(out_dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes records to a caller stream and to `metrics.jsonl`.
pub struct Recorder<'a> {
    out: &'a mut dyn Write,
    metrics: Option<BufWriter<File>>,
}

impl<'a> Recorder<'a> {
    pub fn new(out: &'a mut dyn Write, layout: &Layout) -> Result<Self> {
        let metrics = OpenOptions::new()
            .create(true)
            .append(true)
            .open(layout.metrics())?;
        Ok(Recorder {
            out,
            metrics: Some(BufWriter::new(metrics)),
        })
    }

    pub fn record(&mut self, value: &Value) -> Result<()> {
        let line = serde_json::to_string(value)?;
        writeln!(self.out, "{line}")?;
        if let Some(m) = self.metrics.as_mut() {
            writeln!(m, "{line}")?;
            m.flush()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PrepareMeta {
    train_crc: u32,
    test_crc: u32,
    train_len: u64,
    test_len: u64,
    drop_tol_bits: u64,
    num_users: usize,
    num_items: usize,
}

impl PrepareMeta {
    fn same_inputs(&self, other: &PrepareMeta) -> bool {
        (self.train_crc, self.test_crc, self.train_len, self.test_len, self.drop_tol_bits)
            == (other.train_crc, other.test_crc, other.train_len, other.test_len, other.drop_tol_bits)
    }
}

fn file_crc(path: &Path) -> Result<(u32, u64)> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => e.into(),
    })?;
    Ok((crc32fast::hash(&bytes), bytes.len() as u64))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<InteractionDataset> {
    InteractionDataset::load(&cfg.train_file, &cfg.test_file)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOutcome {
    pub cache_hit: bool,
    pub num_users: usize,
    pub num_items: usize,
}

impl PrepareOutcome {
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }
}

/// Builds and caches the adjacency, its normalization and (for TSA) the
/// normalized square. Skips work when the cache matches the inputs.
pub fn prepare(cfg: &RunConfig, rec: &mut Recorder) -> Result<PrepareOutcome> {
    let layout = Layout::new(&cfg.out_dir);
    let (train_crc, train_len) = file_crc(&cfg.train_file)?;
    let (test_crc, test_len) = file_crc(&cfg.test_file)?;
    let need_sq = cfg.method == Method::Tsa;

    let cached: Option<PrepareMeta> = fs::read(layout.prepare_meta())
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok());
    let probe = PrepareMeta {
        train_crc,
        test_crc,
        train_len,
        test_len,
        drop_tol_bits: cfg.drop_tol.to_bits(),
        num_users: 0,
        num_items: 0,
    };
    if let Some(meta) = cached.filter(|m| cfg.cache && m.same_inputs(&probe)) {
        if layout.adjacency().exists() && layout.normalized().exists() {
            let mut computed_sq = false;
            if need_sq && !layout.normalized_sq().exists() {
                let norm: SparseMatrix = load(layout.normalized())?;
                save(&matrix_power2_with_drop(&norm, cfg.drop_tol)?, layout.normalized_sq())?;
                computed_sq = true;
            }
            rec.record(&json!({
                "stage": "prepare",
                "cache_hit": true,
                "computed_square": computed_sq,
                "users": meta.num_users,
                "items": meta.num_items,
                "nodes": meta.num_users + meta.num_items,
            }))?;
            return Ok(PrepareOutcome {
                cache_hit: true,
                num_users: meta.num_users,
                num_items: meta.num_items,
            });
        }
    }

    let d = load_dataset(cfg)?;
    let adjacency = build_adjacency(&d);
    let normalized = laplacian_normalize(&symmetrize(&adjacency))?;
    save(&adjacency, layout.adjacency())?;
    save(&normalized, layout.normalized())?;
    let mut sq_nnz = None;
    if need_sq {
        let sq = matrix_power2_with_drop(&normalized, cfg.drop_tol)?;
        sq_nnz = Some(sq.nnz());
        save(&sq, layout.normalized_sq())?;
    }
    let meta = PrepareMeta {
        num_users: d.num_users(),
        num_items: d.num_items(),
        ..probe
    };
    fs::write(layout.prepare_meta(), serde_json::to_vec_pretty(&meta)?)?;
    rec.record(&json!({
        "stage": "prepare",
        "cache_hit": false,
        "users": d.num_users(),
        "items": d.num_items(),
        "nodes": d.num_nodes(),
        "train_interactions": d.num_train(),
        "test_interactions": d.num_test(),
        "density": d.density(),
        "nnz_normalized": normalized.nnz(),
        "nnz_normalized_sq": sq_nnz,
    }))?;
    Ok(PrepareOutcome {
        cache_hit: false,
        num_users: d.num_users(),
        num_items: d.num_items(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedOutcome {
    pub table_path: PathBuf,
    pub svd_seconds: f64,
    pub per_hop_rank: usize,
}

/// Truncated SVD(s) of the cached matrices into an embedding table.
pub fn embed(cfg: &RunConfig, rec: &mut Recorder) -> Result<EmbedOutcome> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let meta: PrepareMeta = match fs::read(layout.prepare_meta()) {
        Ok(b) => serde_json::from_slice(&b)?,
        Err(_) => return Err(Error::MissingArtifact(layout.prepare_meta())),
    };
    let normalized: SparseMatrix = load(layout.normalized())?;
    let sq: Option<SparseMatrix> = match cfg.method {
        Method::Tsa => Some(load(layout.normalized_sq())?),
        Method::Ssb => None,
    };
    let mut params = cfg.tsvd_params();
    // Small graphs cannot hold the full oversampled sketch.
    let nodes = meta.num_users + meta.num_items;
    params.oversampling = params.oversampling.min(nodes.saturating_sub(params.k));
    let start = Instant::now();
    let table = compute_embeddings(
        cfg.method,
        &normalized,
        sq.as_ref(),
        meta.num_users,
        meta.num_items,
        cfg.svd_dim,
        &params,
    )?;
    let svd_seconds = start.elapsed().as_secs_f64();
    let tag = cfg.run_tag();
    let table_path = layout.embeddings(&tag);
    save(&table, &table_path)?;
    rec.record(&json!({
        "stage": "embed",
        "method": cfg.method,
        "svd_dim": cfg.svd_dim,
        "per_hop_k": params.k,
        "oversampling": params.oversampling,
        "power_iters": params.power_iters,
        "seed": params.seed,
        "users": table.num_users(),
        "items": table.num_items(),
        "svd_seconds": svd_seconds,
    }))?;
    Ok(EmbedOutcome {
        table_path,
        svd_seconds,
        per_hop_rank: params.k,
    })
}

fn load_embeddings(cfg: &RunConfig) -> Result<EmbeddingTable> {
    let table: EmbeddingTable = load(Layout::new(&cfg.out_dir).embeddings(&cfg.run_tag()))?;
    if table.method != cfg.method || table.dim() != cfg.svd_dim {
        return Err(Error::Format(format!(
            "embedding artifact is {} with width {}, config asks for {} with width {}",
            table.method,
            table.dim(),
            cfg.method,
            cfg.svd_dim
        )));
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub losses: Vec<f64>,
}

/// Trains the scoring head; keeps the best-recall checkpoint when
/// evaluation is enabled, otherwise the final parameters.
pub fn train(cfg: &RunConfig, rec: &mut Recorder) -> Result<TrainOutcome> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let tag = cfg.run_tag();
    let d = load_dataset(cfg)?;
    let e = load_embeddings(cfg)?;
    let mut log = BufWriter::new(File::create(layout.train_log(&tag))?);
    let mut io_err: Option<Error> = None;
    let out = fit_with_callback(&d, &e, &cfg.train, |r| {
        let line = serde_json::to_value(r).map_err(Error::from).and_then(|mut v| {
            writeln!(log, "{v}")?;
            v["stage"] = json!("train");
            v["method"] = json!(cfg.method);
            v["svd_dim"] = json!(cfg.svd_dim);
            rec.record(&v)
        });
        if let (Err(e), None) = (line, &io_err) {
            io_err = Some(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    log.flush()?;
    let checkpoint = Checkpoint {
        params: out.selected_params().clone(),
        epoch: out.best.as_ref().map_or(out.log.len(), |b| b.epoch),
    };
    save(&checkpoint, layout.checkpoint(&tag))?;
    rec.record(&json!({
        "stage": "train_done",
        "method": cfg.method,
        "svd_dim": cfg.svd_dim,
        "epochs": out.log.len(),
        "checkpoint_epoch": checkpoint.epoch,
        "final_loss": out.log.last().map(|r| r.loss),
    }))?;
    Ok(TrainOutcome {
        checkpoint,
        losses: out.log.iter().map(|r| r.loss).collect(),
    })
}

/// Evaluates the stored checkpoint and persists the report.
pub fn eval(cfg: &RunConfig, rec: &mut Recorder, table: &mut dyn Write) -> Result<EvalRecord> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let tag = cfg.run_tag();
    let d = load_dataset(cfg)?;
    let e = load_embeddings(cfg)?;
    let ck: Checkpoint = load(layout.checkpoint(&tag))?;
    let report = evaluate_with(&ck.params, &e, &d, cfg.train.eval_k, cfg.candidates)?;
    let record = EvalRecord {
        method: cfg.method,
        svd_dim: cfg.svd_dim,
        hidden: ck.params.hidden(),
        seed: cfg.train.seed,
        epoch: ck.epoch,
        report,
    };
    save(&record, layout.eval_report(&tag))?;
    let mut v = serde_json::to_value(&record)?;
    v["stage"] = json!("eval");
    rec.record(&v)?;
    write_table(table, &record, cfg.known_dataset())?;
    Ok(record)
}

/// Human-readable comparison against the published numbers.
pub fn write_table(out: &mut dyn Write, r: &EvalRecord, dataset: Option<Dataset>) -> Result<()> {
    let k = r.report.k;
    writeln!(out, "{:<24} {:>10} {:>10}", "method", format!("Recall@{k}"), format!("NDCG@{k}"))?;
    writeln!(out, "{}", "-".repeat(46))?;
    if let Some(ds) = dataset {
        for (name, cols) in PUBLISHED.iter() {
            let (rc, nd) = cols[Dataset::ALL.iter().position(|&x| x == ds).unwrap()];
            writeln!(out, "{:<24} {:>10.4} {:>10.4}", format!("{name} [published]"), rc, nd)?;
        }
        writeln!(out, "{}", "-".repeat(46))?;
        if k != 20 {
            writeln!(out, "(published rows are at K=20)")?;
        }
    }
    writeln!(
        out,
        "{:<24} {:>10.4} {:>10.4}",
        format!("{} ({}) [this run]", r.method.to_string().to_uppercase(), r.svd_dim),
        r.report.recall,
        r.report.ndcg
    )?;
    writeln!(
        out,
        "users evaluated: {}  seed: {}  hidden: {}  epoch: {}",
        r.report.users_evaluated, r.seed, r.hidden, r.epoch
    )?;
    Ok(())
}

/// prepare → embed → train → eval.
pub fn run(cfg: &RunConfig, rec: &mut Recorder, table: &mut dyn Write) -> Result<EvalRecord> {
    cfg.validate()?;
    prepare(cfg, rec)?;
    embed(cfg, rec)?;
    train(cfg, rec)?;
    eval(cfg, rec, table)
}

/// Full runs at each embedding width; each width keeps its own artifacts
/// and training log.
pub fn sweep(
    cfg: &RunConfig,
    dims: &[usize],
    rec: &mut Recorder,
    table: &mut dyn Write,
) -> Result<Vec<EvalRecord>> {
    dims.iter()
        .map(|&dim| {
            let mut c = cfg.clone();
            c.svd_dim = dim;
            run(&c, rec, table)
        })
        .collect()
}

/// Checkpoint holding the seeded initialization, as used for `epochs = 0`.
pub fn initial_checkpoint(cfg: &RunConfig) -> Checkpoint {
    let mut p = ModelParams::init(cfg.svd_dim, cfg.train.hidden, cfg.train.seed);
    if !cfg.train.use_bias {
        p = p.without_bias();
    }
    Checkpoint { params: p, epoch: 0 }
}
