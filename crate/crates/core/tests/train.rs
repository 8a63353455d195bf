mod common;

use std::collections::HashMap;

use common::*;
use rand::seq::SliceRandom;
use svdrec::embed::{compute_embeddings, EmbeddingTable, Method};
use svdrec::graph::{build_graph, InteractionDataset};
use svdrec::matrix::DenseMatrix;
use svdrec::model::{bpr_term, score, ModelParams};
use svdrec::train::*;
use svdrec::tsvd::TsvdParams;
use svdrec::Error;

fn community_embeddings(d: &InteractionDataset, method: Method, dim: usize) -> EmbeddingTable {
    let g = build_graph(d, method == Method::Tsa).unwrap();
    compute_embeddings(
        method,
        &g.normalized,
        g.normalized_sq.as_ref(),
        d.num_users(),
        d.num_items(),
        dim,
        &TsvdParams::default(),
    )
    .unwrap()
}

#[test]
fn single_candidate_negative() {
    let d = InteractionDataset::new(1, 2, vec![vec![0]], vec![vec![]]).unwrap();
    let mut r = rng(1);
    for _ in 0..50 {
        let t = sample_epoch_triples(&d, &mut r).unwrap();
        assert_eq!(t, vec![Triple { u: 0, i: 0, j: 1 }]);
    }
}

#[test]
fn one_triple_per_interaction_with_valid_membership() {
    let d = two_community_dataset(20, 30, 6, 2, 3);
    let mut r = rng(2);
    let t = sample_epoch_triples(&d, &mut r).unwrap();
    assert_eq!(t.len(), d.num_train());
    for x in &t {
        assert!(d.train(x.u).contains(&x.i));
        assert!(!d.train(x.u).contains(&x.j));
        assert_ne!(x.i, x.j);
    }
    let mut pairs: Vec<_> = t.iter().map(|x| (x.u, x.i)).collect();
    pairs.sort_unstable();
    pairs.dedup();
    assert_eq!(pairs.len(), d.num_train());
}

#[test]
fn saturated_user_has_no_negative() {
    let d = InteractionDataset::new(1, 2, vec![vec![0, 1]], vec![vec![]]).unwrap();
    assert!(matches!(
        sample_epoch_triples(&d, &mut rng(0)),
        Err(Error::NoNegative { user: 0 })
    ));
}

#[test]
fn negatives_are_uniform() {
    let d = InteractionDataset::new(1, 10, vec![vec![2, 5, 7]], vec![vec![]]).unwrap();
    let mut r = rng(3);
    let mut counts: HashMap<usize, usize> = HashMap::new();
    let mut total = 0;
    while total < 100_000 {
        for t in sample_epoch_triples(&d, &mut r).unwrap() {
            *counts.entry(t.j).or_default() += 1;
            total += 1;
        }
    }
    assert_eq!(counts.len(), 7);
    for (&j, &c) in &counts {
        assert!(![2, 5, 7].contains(&j));
        let freq = c as f64 / total as f64;
        assert!((freq - 1.0 / 7.0).abs() <= 0.01, "item {j}: {freq}");
    }
}

#[test]
fn loss_is_ln2_when_scores_tie() {
    // Identical item rows make every score difference zero.
    let e = EmbeddingTable::new(
        Method::Ssb,
        DenseMatrix::from_rows(&[vec![0.3, -0.1], vec![1.0, 2.0]]).unwrap(),
        DenseMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
    )
    .unwrap();
    let p = ModelParams::init(2, 3, 0);
    let batch = [Triple { u: 0, i: 0, j: 1 }, Triple { u: 1, i: 2, j: 0 }];
    let (loss, _) = bpr_batch_loss(&p, &batch, &e, 0.0).unwrap();
    assert!((loss - 2f64.ln()).abs() <= 1e-12);
    let (with_l2, _) = bpr_batch_loss(&p, &batch, &e, 0.5).unwrap();
    assert!((with_l2 - loss - 0.5 * p.weight_sq_norm()).abs() <= 1e-12);
}

#[test]
fn loss_tends_to_regularizer_for_large_margins() {
    let e = EmbeddingTable::new(
        Method::Ssb,
        DenseMatrix::from_rows(&[vec![100.0]]).unwrap(),
        DenseMatrix::from_rows(&[vec![100.0], vec![-100.0]]).unwrap(),
    )
    .unwrap();
    let mut p = ModelParams::zeros(1, 1);
    p.w1[(0, 0)] = 0.5;
    let (loss, _) = bpr_batch_loss(&p, &[Triple { u: 0, i: 0, j: 1 }], &e, 0.1).unwrap();
    assert!((loss - 0.1 * 0.25).abs() <= 1e-12);
}

#[test]
fn batch_loss_matches_scalar_oracle() {
    let d = two_community_dataset(10, 12, 3, 1, 4);
    let e = EmbeddingTable::new(
        Method::Ssb,
        random_dense(10, 8, &mut rng(5)),
        random_dense(12, 8, &mut rng(6)),
    )
    .unwrap();
    let p = ModelParams::init(8, 6, 7);
    let batch: Vec<Triple> = sample_epoch_triples(&d, &mut rng(8)).unwrap().into_iter().take(4).collect();
    let l2 = 1e-3;
    let oracle = |p: &ModelParams| -> f64 {
        let mut total = 0.0;
        for t in &batch {
            let si = score(p, e.user(t.u), e.item(t.i)).unwrap();
            let sj = score(p, e.user(t.u), e.item(t.j)).unwrap();
            total += (1.0 + (-(si - sj)).exp()).ln();
        }
        let w: f64 = p.w1.data().iter().chain(p.w2.data()).map(|x| x * x).sum();
        total / batch.len() as f64 + l2 * w
    };
    let (loss, g) = bpr_batch_loss(&p, &batch, &e, l2).unwrap();
    assert!((loss - oracle(&p)).abs() <= 1e-6);
    let h = 1e-6;
    for (t, gt) in g.tensors().iter().enumerate() {
        for (k, &analytic) in gt.iter().enumerate() {
            let mut a = p.clone();
            a.tensors_mut()[t][k] += h;
            let mut b = p.clone();
            b.tensors_mut()[t][k] -= h;
            let fd = (oracle(&a) - oracle(&b)) / (2.0 * h);
            assert!((analytic - fd).abs() <= 1e-6, "{t}[{k}] {analytic} vs {fd}");
        }
    }
}

#[test]
fn adam_first_step_is_learning_rate() {
    let mut p = ModelParams::zeros(2, 2);
    let mut g = p.zeros_like();
    for (i, t) in g.tensors_mut().into_iter().enumerate() {
        t.iter_mut().for_each(|x| *x = if i % 2 == 0 { 0.003 } else { -5.0 });
    }
    let mut st = AdamState::new(&p);
    adam_step(&mut p, &g, &mut st, 0.01).unwrap();
    for (i, t) in p.tensors().iter().enumerate() {
        let want = if i % 2 == 0 { -0.01 } else { 0.01 };
        assert!(t.iter().all(|x| (x - want).abs() <= 1e-6));
    }
    assert_eq!(st.t, 1);
}

#[test]
fn adam_zero_gradient_and_zero_rate() {
    let mut p = ModelParams::init(3, 2, 1);
    let before = p.clone();
    let g = p.zeros_like();
    let mut st = AdamState::new(&p);
    adam_step(&mut p, &g, &mut st, 0.1).unwrap();
    assert_eq!(p, before);
    assert_eq!(st.t, 1);

    let mut g2 = p.zeros_like();
    g2.w1.data_mut().iter_mut().for_each(|x| *x = 1.0);
    adam_step(&mut p, &g2, &mut st, 0.0).unwrap();
    assert_eq!(p, before);
    assert!(st.v.tensors().iter().all(|t| t.iter().all(|&v| v >= 0.0)));
}

#[test]
fn adam_minimizes_quadratic() {
    let mut p = ModelParams::zeros(1, 1);
    p.w1[(0, 0)] = 1.0;
    let mut st = AdamState::new(&p);
    for _ in 0..100 {
        let mut g = p.zeros_like();
        g.w1[(0, 0)] = 2.0 * p.w1[(0, 0)];
        adam_step(&mut p, &g, &mut st, 0.1).unwrap();
    }
    // Scalar simulation of the same recurrences.
    let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    for t in 1..=100 {
        let g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.1 * (m / (1.0 - 0.9f64.powi(t))) / ((v / (1.0 - 0.999f64.powi(t))).sqrt() + 1e-8);
    }
    assert!((p.w1[(0, 0)] - x).abs() <= 1e-12);
    assert!(x.abs() < 0.05, "{x}");
}

#[test]
fn adam_rejects_shape_mismatch() {
    let mut p = ModelParams::zeros(2, 2);
    let mut st = AdamState::new(&p);
    assert!(adam_step(&mut p, &ModelParams::zeros(3, 2), &mut st, 0.1).is_err());
}

#[test]
fn loss_invariant_under_item_relabeling() {
    let d = two_community_dataset(12, 16, 4, 1, 9);
    let e = EmbeddingTable::new(Method::Ssb, random_dense(12, 6, &mut rng(10)), random_dense(16, 6, &mut rng(11))).unwrap();
    let p = ModelParams::init(6, 4, 12);
    let triples = sample_epoch_triples(&d, &mut rng(13)).unwrap();

    let mut perm: Vec<usize> = (0..16).collect();
    perm.shuffle(&mut rng(14));
    let mut items = DenseMatrix::zeros(16, 6);
    for i in 0..16 {
        items.row_mut(perm[i]).copy_from_slice(e.item(i));
    }
    let e2 = EmbeddingTable::new(Method::Ssb, e.users().clone(), items).unwrap();
    let relabeled: Vec<Triple> = triples.iter().map(|t| Triple { u: t.u, i: perm[t.i], j: perm[t.j] }).collect();

    let (a, _) = bpr_batch_loss(&p, &triples, &e, 0.0).unwrap();
    let (b, _) = bpr_batch_loss(&p, &relabeled, &e2, 0.0).unwrap();
    assert!((a - b).abs() <= 1e-12);
}

#[test]
fn zero_epochs_returns_initialization() {
    let d = two_community_dataset(10, 10, 3, 1, 1);
    let e = community_embeddings(&d, Method::Ssb, 4);
    let cfg = TrainConfig { epochs: 0, hidden: 8, ..Default::default() };
    let out = fit(&d, &e, &cfg).unwrap();
    assert!(out.log.is_empty() && out.best.is_none());
    assert_eq!(out.params, ModelParams::init(4, 8, cfg.seed));
}

#[test]
fn community_training_loss_falls() {
    let d = two_community_dataset(60, 60, 20, 5, 7);
    let e = community_embeddings(&d, Method::Tsa, 16);
    let cfg = TrainConfig { epochs: 100, hidden: 32, eval_every: 0, seed: 1, ..Default::default() };
    let out = fit(&d, &e, &cfg).unwrap();
    let losses: Vec<f64> = out.log.iter().map(|r| r.loss).collect();
    assert!(losses[..10].windows(2).all(|w| w[1] < w[0]), "{:?}", &losses[..10]);
    assert!(*losses.last().unwrap() < 0.3);
    assert!(losses.last().unwrap() < &losses[0]);
    assert!(out.log.iter().all(|r| r.recall.is_none()));
}

#[test]
fn fit_is_deterministic_and_tracks_best_epoch() {
    let d = two_community_dataset(20, 20, 6, 2, 2);
    let e = community_embeddings(&d, Method::Ssb, 6);
    let cfg = TrainConfig { epochs: 12, hidden: 8, eval_every: 5, eval_k: 5, batch_size: 16, ..Default::default() };
    let a = fit(&d, &e, &cfg).unwrap();
    let b = fit(&d, &e, &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.params, b.params);
    let evaluated: Vec<usize> = a.log.iter().filter(|r| r.recall.is_some()).map(|r| r.epoch).collect();
    assert_eq!(evaluated, vec![5, 10, 12]);
    let best = a.best.as_ref().unwrap();
    let max = a.log.iter().filter_map(|r| r.recall).fold(f64::MIN, f64::max);
    assert_eq!(best.report.recall, max);
    assert!(a.log.iter().all(|r| r.loss.is_finite() && r.loss >= 0.0));
    assert!(bpr_term(0.0) > 0.0);
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    for bad in [
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { learning_rate: 0.0, ..ok.clone() },
        TrainConfig { l2_reg: -1.0, ..ok.clone() },
        TrainConfig { learning_rate: f64::NAN, ..ok.clone() },
    ] {
        assert!(bad.validate().is_err());
    }
}
