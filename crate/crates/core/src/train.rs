//! Mini-batch BPR training with uniform negative sampling and Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, CandidatePool, EvalReport};
use crate::graph::InteractionDataset;
use crate::matrix::DenseMatrix;
use crate::model::{bpr_batch_gradients, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Coefficient on `‖W1‖² + ‖W2‖²`.
    pub l2_reg: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Evaluate every this many epochs; 0 disables evaluation.
    pub eval_every: usize,
    pub eval_k: usize,
    pub hidden: usize,
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1024,
            learning_rate: 1e-3,
            l2_reg: 1e-4,
            epochs: 400,
            seed: 2022,
            eval_every: 10,
            eval_k: 20,
            hidden: 512,
            use_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParam("learning_rate must be > 0".into()));
        }
        if !(self.l2_reg >= 0.0) {
            return Err(Error::InvalidParam("l2_reg must be >= 0".into()));
        }
        if self.hidden == 0 || self.eval_k == 0 {
            return Err(Error::InvalidParam("hidden and eval_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub u: usize,
    pub i: usize,
    pub j: usize,
}

/// One triple per train interaction, negatives drawn uniformly from the
/// items outside the user's train set, in shuffled order.
pub fn sample_epoch_triples(d: &InteractionDataset, rng: &mut impl Rng) -> Result<Vec<Triple>> {
    let n = d.num_items();
    let mut out = Vec::with_capacity(d.num_train());
    for u in 0..d.num_users() {
        let pos = d.train(u);
        if pos.is_empty() {
            continue;
        }
        if pos.len() >= n {
            return Err(Error::NoNegative { user: u });
        }
        for &i in pos {
            let j = loop {
                let j = rng.random_range(0..n);
                if pos.binary_search(&j).is_err() {
                    break j;
                }
            };
            out.push(Triple { u, i, j });
        }
    }
    out.shuffle(rng);
    debug_assert!(out.iter().all(|t| {
        d.train(t.u).binary_search(&t.i).is_ok() && d.train(t.u).binary_search(&t.j).is_err()
    }));
    Ok(out)
}

fn gather<'a>(rows: impl Iterator<Item = &'a [f64]>, len: usize, dim: usize) -> DenseMatrix {
    let mut data = Vec::with_capacity(len * dim);
    for r in rows {
        data.extend_from_slice(r);
    }
    DenseMatrix::from_vec(len, dim, data).expect("gathered rows have the table width")
}

/// Mean BPR loss of a batch plus `l2·(‖W1‖² + ‖W2‖²)`, with gradients.
pub fn bpr_batch_loss(
    p: &ModelParams,
    batch: &[Triple],
    e: &EmbeddingTable,
    l2: f64,
) -> Result<(f64, ModelParams)> {
    let t = batch.len();
    let dim = e.dim();
    for tr in batch {
        if tr.u >= e.num_users() || tr.i >= e.num_items() || tr.j >= e.num_items() {
            return Err(Error::InvalidParam(format!("triple {tr:?} out of range")));
        }
    }
    let xu = gather(batch.iter().map(|x| e.user(x.u)), t, dim);
    let xi = gather(batch.iter().map(|x| e.item(x.i)), t, dim);
    let xj = gather(batch.iter().map(|x| e.item(x.j)), t, dim);
    bpr_batch_gradients(p, &xu, &xi, &xj, l2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(p: &ModelParams) -> Self {
        AdamState {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update, in place.
pub fn adam_step(p: &mut ModelParams, g: &ModelParams, st: &mut AdamState, lr: f64) -> Result<()> {
    if p.tensors().map(<[f64]>::len) != g.tensors().map(<[f64]>::len)
        || p.tensors().map(<[f64]>::len) != st.m.tensors().map(<[f64]>::len)
    {
        return Err(Error::dims("adam_step", "parameter and gradient shapes differ"));
    }
    st.t += 1;
    let (b1, b2, eps) = (st.beta1, st.beta2, st.eps);
    let c1 = 1.0 - b1.powi(st.t as i32);
    let c2 = 1.0 - b2.powi(st.t as i32);
    let use_bias = p.use_bias;
    for (k, (((w, gw), m), v)) in p
        .tensors_mut()
        .into_iter()
        .zip(g.tensors())
        .zip(st.m.tensors_mut())
        .zip(st.v.tensors_mut())
        .enumerate()
    {
        // Blocks 1 and 3 are the biases.
        if !use_bias && k % 2 == 1 {
            continue;
        }
        for (((w, &gw), m), v) in w.iter_mut().zip(gw).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * gw;
            *v = b2 * *v + (1.0 - b2) * gw * gw;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub params: ModelParams,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    /// Parameters after the last epoch.
    pub params: ModelParams,
    /// Highest-recall evaluated epoch, when evaluation ran.
    pub best: Option<BestCheckpoint>,
    pub log: Vec<EpochRecord>,
}

impl FitOutput {
    /// Best checkpoint if any, else the final parameters.
    pub fn selected_params(&self) -> &ModelParams {
        self.best.as_ref().map_or(&self.params, |b| &b.params)
    }
}

pub fn fit(d: &InteractionDataset, e: &EmbeddingTable, cfg: &TrainConfig) -> Result<FitOutput> {
    fit_with_callback(d, e, cfg, |_| {})
}

/// Trains from a seeded initialization, calling `on_epoch` after each epoch.
pub fn fit_with_callback(
    d: &InteractionDataset,
    e: &EmbeddingTable,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutput> {
    cfg.validate()?;
    if e.num_users() != d.num_users() || e.num_items() != d.num_items() {
        return Err(Error::dims(
            "fit",
            format!(
                "embeddings cover {}x{} but dataset has {}x{}",
                e.num_users(),
                e.num_items(),
                d.num_users(),
                d.num_items()
            ),
        ));
    }
    let mut params = ModelParams::init(e.dim(), cfg.hidden, cfg.seed);
    if !cfg.use_bias {
        params = params.without_bias();
    }
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<BestCheckpoint> = None;

    for epoch in 1..=cfg.epochs {
        let triples = sample_epoch_triples(d, &mut rng)?;
        let mut total = 0.0;
        for batch in triples.chunks(cfg.batch_size) {
            let (loss, grads) = bpr_batch_loss(&params, batch, e, cfg.l2_reg)?;
            adam_step(&mut params, &grads, &mut adam, cfg.learning_rate)?;
            total += loss * batch.len() as f64;
        }
        let loss = if triples.is_empty() {
            0.0
        } else {
            total / triples.len() as f64
        };
        let mut rec = EpochRecord {
            epoch,
            loss,
            recall: None,
            ndcg: None,
        };
        if cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            let report = evaluate_with(&params, e, d, cfg.eval_k, CandidatePool::NonTrain)?;
            rec.recall = Some(report.recall);
            rec.ndcg = Some(report.ndcg);
            if best.as_ref().is_none_or(|b| report.recall > b.report.recall) {
                best = Some(BestCheckpoint {
                    epoch,
                    params: params.clone(),
                    report,
                });
            }
        }
        on_epoch(&rec);
        log.push(rec);
    }
    Ok(FitOutput { params, best, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_candidate_negative() {
        let d = InteractionDataset::new(1, 2, vec![vec![0]], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let t = sample_epoch_triples(&d, &mut rng).unwrap();
            assert_eq!(t, vec![Triple { u: 0, i: 0, j: 1 }]);
        }
    }

    #[test]
    fn saturated_user_is_an_error() {
        let d = InteractionDataset::new(2, 2, vec![vec![0], vec![0, 1]], vec![]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_epoch_triples(&d, &mut rng),
            Err(Error::NoNegative { user: 1 })
        ));
    }

    #[test]
    fn zero_gradient_step_only_advances_time() {
        let mut p = ModelParams::init(3, 2, 0);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let g = p.zeros_like();
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_learning_rate_is_noop() {
        let mut p = ModelParams::init(3, 2, 0);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.w1.data_mut().iter_mut().for_each(|x| *x = 0.7);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 0.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = ModelParams::zeros(2, 2);
        let mut g = p.zeros_like();
        for (k, x) in g.w1.data_mut().iter_mut().enumerate() {
            *x = if k % 2 == 0 { 1e-3 } else { -5.0 };
        }
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
        for (w, gw) in p.w1.data().iter().zip(g.w1.data()) {
            assert!((w.abs() - 1e-3).abs() < 1e-6);
            assert_eq!(w.signum(), -gw.signum());
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = [
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { l2_reg: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
