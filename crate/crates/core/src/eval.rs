//! Top-K retrieval and mean per-user Recall@K / NDCG@K.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::InteractionDataset;
use crate::matrix::{dot, DenseMatrix};
use crate::model::{representations, ModelParams};

/// Which items a user's ranking draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidatePool {
    /// Every item outside the user's train set.
    #[default]
    NonTrain,
    /// Only the user's test items.
    TestOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users_evaluated: usize,
}

/// Highest-scoring `k` candidates, ties broken by ascending item id.
/// `excluded` must be sorted.
pub fn rank_top_k(scores: &[f64], excluded: &[usize], k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len())
        .filter(|i| excluded.binary_search(i).is_err())
        .collect();
    select_top(&mut cand, scores, k)
}

fn by_score_then_id(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn select_top(cand: &mut Vec<usize>, scores: &[f64], k: usize) -> Vec<usize> {
    let cmp = by_score_then_id(scores);
    if k == 0 {
        return Vec::new();
    }
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, &cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(&cmp);
    std::mem::take(cand)
}

/// `|ranked[..k] ∩ test| / |test|`; `test` must be sorted and non-empty.
pub fn recall_at_k(ranked: &[usize], test: &[usize], k: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    hits(ranked, test, k) as f64 / test.len() as f64
}

fn hits(ranked: &[usize], test: &[usize], k: usize) -> usize {
    ranked
        .iter()
        .take(k)
        .filter(|i| test.binary_search(i).is_ok())
        .count()
}

/// Binary-relevance NDCG with `log₂(rank + 1)` discounts.
pub fn ndcg_at_k(ranked: &[usize], test: &[usize], k: usize) -> f64 {
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(test.len()))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Precomputed node representations for repeated scoring.
pub struct ScoringIndex {
    users: DenseMatrix,
    items: DenseMatrix,
}

impl ScoringIndex {
    pub fn new(p: &ModelParams, e: &EmbeddingTable) -> Result<Self> {
        Ok(ScoringIndex {
            users: representations(p, e.users())?,
            items: representations(p, e.items())?,
        })
    }

    pub fn num_items(&self) -> usize {
        self.items.rows()
    }

    pub fn scores(&self, u: usize) -> Vec<f64> {
        let ru = self.users.row(u);
        (0..self.items.rows())
            .map(|i| dot(ru, self.items.row(i)))
            .collect()
    }

    pub fn top_k(
        &self,
        d: &InteractionDataset,
        u: usize,
        k: usize,
        pool: CandidatePool,
    ) -> Vec<usize> {
        let scores = self.scores(u);
        match pool {
            CandidatePool::NonTrain => rank_top_k(&scores, d.train(u), k),
            CandidatePool::TestOnly => select_top(&mut d.test(u).to_vec(), &scores, k),
        }
    }
}

/// The `k` best non-train items for user `u`.
pub fn top_k_items(
    p: &ModelParams,
    e: &EmbeddingTable,
    d: &InteractionDataset,
    u: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if u >= d.num_users() {
        return Err(Error::InvalidParam(format!("user {u} out of range")));
    }
    Ok(ScoringIndex::new(p, e)?.top_k(d, u, k, CandidatePool::NonTrain))
}

pub fn evaluate(
    p: &ModelParams,
    e: &EmbeddingTable,
    d: &InteractionDataset,
    k: usize,
) -> Result<EvalReport> {
    evaluate_with(p, e, d, k, CandidatePool::NonTrain)
}

pub fn evaluate_with(
    p: &ModelParams,
    e: &EmbeddingTable,
    d: &InteractionDataset,
    k: usize,
    pool: CandidatePool,
) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::InvalidParam("cutoff k must be >= 1".into()));
    }
    if e.num_users() != d.num_users() || e.num_items() != d.num_items() {
        return Err(Error::dims("evaluate", "embedding table and dataset sizes differ"));
    }
    let index = ScoringIndex::new(p, e)?;
    let per_user: Vec<(f64, f64)> = (0..d.num_users())
        .into_par_iter()
        .filter(|&u| !d.test(u).is_empty())
        .map(|u| {
            let ranked = index.top_k(d, u, k, pool);
            (
                recall_at_k(&ranked, d.test(u), k),
                ndcg_at_k(&ranked, d.test(u), k),
            )
        })
        .collect();
    let n = per_user.len();
    let mean = |f: fn(&(f64, f64)) -> f64| {
        if n == 0 {
            0.0
        } else {
            compensated_sum(per_user.iter().map(f)) / n as f64
        }
    };
    Ok(EvalReport {
        k,
        recall: mean(|x| x.0),
        ndcg: mean(|x| x.1),
        users_evaluated: n,
    })
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_train_items() {
        // scores for items 0, 1, 2 with item 1 in train.
        let ranked = rank_top_k(&[0.5, 2.0, 0.9], &[1], 2);
        assert_eq!(ranked, vec![2, 0]);
    }

    #[test]
    fn ties_go_to_lower_ids() {
        assert_eq!(rank_top_k(&[1.0; 6], &[0, 3], 3), vec![1, 2, 4]);
        assert_eq!(rank_top_k(&[1.0; 3], &[], 10), vec![0, 1, 2]);
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[7, 1, 9], &[1, 4], 3), 0.5);
        assert_eq!(recall_at_k(&[4, 1, 9], &[1, 4], 3), 1.0);
        assert_eq!(recall_at_k(&[9, 1, 4], &[1, 4], 1), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[3, 1], &[3], 20), 1.0);
        let second = ndcg_at_k(&[1, 3], &[3], 2);
        assert!((second - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((second - 0.63093).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&[1, 2], &[3], 2), 0.0);
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(xs.into_iter()), 1.0);
    }

    #[test]
    fn zero_cutoff_rejected() {
        let d = InteractionDataset::new(1, 1, vec![vec![]], vec![vec![0]]).unwrap();
        let e = EmbeddingTable::new(
            crate::embed::Method::Ssb,
            DenseMatrix::zeros(1, 1),
            DenseMatrix::zeros(1, 1),
        )
        .unwrap();
        assert!(evaluate(&ModelParams::zeros(1, 1), &e, &d, 0).is_err());
    }
}
