//! Run configuration: a flat `key = value` file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use crate::baselines::Dataset;
use crate::embed::Method;
use crate::error::{Error, Result};
use crate::eval::CandidatePool;
use crate::train::TrainConfig;
use crate::tsvd::TsvdParams;

pub const MAX_SVD_DIM: usize = 8192;

/// Embedding widths swept for the embedding-size ablation.
pub const SWEEP_DIMS: [usize; 5] = [64, 128, 256, 512, 1024];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_file: PathBuf,
    pub test_file: PathBuf,
    /// Dataset name, used for published-number lookups and batch defaults.
    pub dataset: Option<String>,
    pub method: Method,
    /// Total SVD embedding width (split in two for TSA).
    pub svd_dim: usize,
    pub train: TrainConfig,
    pub oversampling: usize,
    pub power_iters: usize,
    pub svd_tol: Option<f64>,
    pub drop_tol: f64,
    pub candidates: CandidatePool,
    pub out_dir: PathBuf,
    pub cache: bool,
    batch_size_explicit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tsvd = TsvdParams::default();
        RunConfig {
            train_file: PathBuf::from("train.txt"),
            test_file: PathBuf::from("test.txt"),
            dataset: None,
            method: Method::Tsa,
            svd_dim: 1024,
            train: TrainConfig::default(),
            oversampling: tsvd.oversampling,
            power_iters: tsvd.power_iters,
            svd_tol: None,
            drop_tol: 0.0,
            candidates: CandidatePool::NonTrain,
            out_dir: PathBuf::from("out"),
            cache: true,
            batch_size_explicit: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidParam(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidParam(format!("bad boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, base, path)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, base: &Path, label: &Path) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: label.to_path_buf(),
                line: idx + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            self.set(key, value).map_err(|e| Error::Parse {
                path: label.to_path_buf(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
            if matches!(key, "train_file" | "test_file" | "out_dir") {
                let p = self.path_mut(key);
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(())
    }

    fn path_mut(&mut self, key: &str) -> &mut PathBuf {
        match key {
            "train_file" => &mut self.train_file,
            "test_file" => &mut self.test_file,
            _ => &mut self.out_dir,
        }
    }

    /// Sets one option by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "train_file" => self.train_file = PathBuf::from(value),
            "test_file" => self.test_file = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "dataset" => {
                self.dataset = Some(value.to_string());
                if let (false, Some(ds)) = (self.batch_size_explicit, Dataset::from_name(value)) {
                    self.train.batch_size = ds.batch_size();
                }
            }
            "method" => self.method = value.parse()?,
            "svd_dim" => self.svd_dim = parse_value(key, value)?,
            "hidden" => self.train.hidden = parse_value(key, value)?,
            "batch_size" => {
                self.train.batch_size = parse_value(key, value)?;
                self.batch_size_explicit = true;
            }
            "learning_rate" => self.train.learning_rate = parse_value(key, value)?,
            "l2_reg" => self.train.l2_reg = parse_value(key, value)?,
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "seed" => self.train.seed = parse_value(key, value)?,
            "eval_every" => self.train.eval_every = parse_value(key, value)?,
            "k" => self.train.eval_k = parse_value(key, value)?,
            "use_bias" => self.train.use_bias = parse_bool(key, value)?,
            "oversampling" => self.oversampling = parse_value(key, value)?,
            "power_iters" => self.power_iters = parse_value(key, value)?,
            "svd_tol" => {
                self.svd_tol = match value {
                    "" | "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "drop_tol" => self.drop_tol = parse_value(key, value)?,
            "candidates" => {
                self.candidates = match value {
                    "non-train" | "non_train" => CandidatePool::NonTrain,
                    "test-only" | "test_only" => CandidatePool::TestOnly,
                    other => {
                        return Err(Error::InvalidParam(format!(
                            "candidates must be non-train or test-only, got {other:?}"
                        )))
                    }
                }
            }
            "cache" => self.cache = parse_bool(key, value)?,
            other => return Err(Error::InvalidParam(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.svd_dim == 0 || self.svd_dim > MAX_SVD_DIM {
            return Err(Error::InvalidParam(format!(
                "svd_dim must be in 1..={MAX_SVD_DIM}, got {}",
                self.svd_dim
            )));
        }
        self.method.per_hop_rank(self.svd_dim)?;
        if !(self.drop_tol >= 0.0) {
            return Err(Error::InvalidParam("drop_tol must be >= 0".into()));
        }
        self.train.validate()
    }

    pub fn tsvd_params(&self) -> TsvdParams {
        let mut p = TsvdParams {
            k: self.method.per_hop_rank(self.svd_dim).unwrap_or(self.svd_dim),
            oversampling: self.oversampling,
            power_iters: self.power_iters,
            seed: self.train.seed,
            ..TsvdParams::default()
        };
        if let Some(tol) = self.svd_tol {
            p.tol = Some(tol);
        }
        p
    }

    pub fn known_dataset(&self) -> Option<Dataset> {
        self.dataset.as_deref().and_then(Dataset::from_name)
    }

    /// Artifact file stem for this method and width, e.g. `tsa_1024`.
    pub fn run_tag(&self) -> String {
        format!("{}_{}", self.method, self.svd_dim)
    }
}
