//! Two-layer linear perceptron shared by the user and item towers.
//!
//! A node's representation is `[x | m1 | m2]` with `m1 = W1ᵀx + b1` and
//! `m2 = W2ᵀm1 + b2`; the score of a pair is the dot product of the two
//! representations. Gradients are derived by hand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `d×h`.
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    /// `h×h`.
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
    /// When false the biases stay at zero and receive no gradient.
    pub use_bias: bool,
}

impl ModelParams {
    pub fn zeros(d: usize, h: usize) -> Self {
        ModelParams {
            w1: DenseMatrix::zeros(d, h),
            b1: vec![0.0; h],
            w2: DenseMatrix::zeros(h, h),
            b2: vec![0.0; h],
            use_bias: true,
        }
    }

    /// Weights uniform in `±1/√fan_in` per layer, biases zero.
    pub fn init(d: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::zeros(d, h);
        let a1 = 1.0 / (d.max(1) as f64).sqrt();
        let a2 = 1.0 / (h.max(1) as f64).sqrt();
        p.w1.data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a1..=a1));
        p.w2.data_mut()
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-a2..=a2));
        p
    }

    pub fn without_bias(mut self) -> Self {
        self.use_bias = false;
        self.b1.iter_mut().for_each(|b| *b = 0.0);
        self.b2.iter_mut().for_each(|b| *b = 0.0);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn representation_dim(&self) -> usize {
        self.input_dim() + 2 * self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h) = (self.input_dim(), self.hidden());
        if self.b1.len() != h || self.b2.len() != h || self.w2.rows() != h || self.w2.cols() != h
        {
            return Err(Error::dims(
                "ModelParams",
                format!("inconsistent shapes for d={d}, h={h}"),
            ));
        }
        if !self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("ModelParams"));
        }
        Ok(())
    }

    /// Parameter blocks in a fixed order: `w1, b1, w2, b2`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.data(), &self.b1, self.w2.data(), &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.data_mut(),
            &mut self.b1,
            self.w2.data_mut(),
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `‖W1‖² + ‖W2‖²` (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        dot(self.w1.data(), self.w1.data()) + dot(self.w2.data(), self.w2.data())
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            use_bias: self.use_bias,
            ..ModelParams::zeros(self.input_dim(), self.hidden())
        }
    }
}

/// `[x | m1 | m2]` for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRepresentation {
    pub concat: Vec<f64>,
    d: usize,
    h: usize,
}

impl NodeRepresentation {
    pub fn input(&self) -> &[f64] {
        &self.concat[..self.d]
    }

    pub fn layer1(&self) -> &[f64] {
        &self.concat[self.d..self.d + self.h]
    }

    pub fn layer2(&self) -> &[f64] {
        &self.concat[self.d + self.h..]
    }
}

fn check_input(p: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != p.input_dim() {
        return Err(Error::dims(
            "forward",
            format!("embedding of length {} for d={}", x.len(), p.input_dim()),
        ));
    }
    Ok(())
}

/// `out = Wᵀx + b` for row-major `W` of shape `len(x)×len(b)`.
fn affine_t(w: &DenseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = b.to_vec();
    for (p, &xp) in x.iter().enumerate() {
        if xp == 0.0 {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(w.row(p)) {
            *o += xp * wv;
        }
    }
    out
}

/// `W·y` for row-major `W`.
fn mat_vec(w: &DenseMatrix, y: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|p| dot(w.row(p), y)).collect()
}

pub fn forward(p: &ModelParams, x: &[f64]) -> Result<NodeRepresentation> {
    check_input(p, x)?;
    let m1 = affine_t(&p.w1, x, &p.b1);
    let m2 = affine_t(&p.w2, &m1, &p.b2);
    let mut concat = Vec::with_capacity(p.representation_dim());
    concat.extend_from_slice(x);
    concat.extend_from_slice(&m1);
    concat.extend_from_slice(&m2);
    Ok(NodeRepresentation {
        concat,
        d: p.input_dim(),
        h: p.hidden(),
    })
}

pub fn score(p: &ModelParams, x_u: &[f64], x_i: &[f64]) -> Result<f64> {
    let ru = forward(p, x_u)?;
    let ri = forward(p, x_i)?;
    Ok(dot(&ru.concat, &ri.concat))
}

/// Representations of every row of `x` (`rows × (d+2h)`).
pub fn representations(p: &ModelParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    let (m1, m2) = forward_batch(p, x)?;
    let (d, h) = (p.input_dim(), p.hidden());
    let mut out = DenseMatrix::zeros(x.rows(), d + 2 * h);
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        row[..d].copy_from_slice(x.row(r));
        row[d..d + h].copy_from_slice(m1.row(r));
        row[d + h..].copy_from_slice(m2.row(r));
    }
    Ok(out)
}

/// Layer outputs for a batch of embedding rows.
pub fn forward_batch(p: &ModelParams, x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.cols() != p.input_dim() {
        return Err(Error::dims(
            "forward_batch",
            format!("embeddings of width {} for d={}", x.cols(), p.input_dim()),
        ));
    }
    let mut m1 = x.matmul(&p.w1)?;
    add_row_bias(&mut m1, &p.b1);
    let mut m2 = m1.matmul(&p.w2)?;
    add_row_bias(&mut m2, &p.b2);
    Ok((m1, m2))
}

fn add_row_bias(m: &mut DenseMatrix, b: &[f64]) {
    for r in 0..m.rows() {
        for (v, &bb) in m.row_mut(r).iter_mut().zip(b) {
            *v += bb;
        }
    }
}

/// `−ln σ(Δ)`, stable for large `|Δ|`.
pub fn bpr_term(delta: f64) -> f64 {
    if delta > 0.0 {
        (-delta).exp().ln_1p()
    } else {
        -delta + delta.exp().ln_1p()
    }
}

/// `d/dΔ [−ln σ(Δ)] = σ(Δ) − 1`.
pub fn bpr_slope(delta: f64) -> f64 {
    if delta > 0.0 {
        let e = (-delta).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + delta.exp())
    }
}

/// Loss `−ln σ(score(u,i) − score(u,j))` and its gradient with respect to
/// every parameter block.
pub fn bpr_triple_gradients(
    p: &ModelParams,
    x_u: &[f64],
    x_i: &[f64],
    x_j: &[f64],
) -> Result<(f64, ModelParams)> {
    let ru = forward(p, x_u)?;
    let ri = forward(p, x_i)?;
    let rj = forward(p, x_j)?;
    let delta = dot(&ru.concat, &ri.concat) - dot(&ru.concat, &rj.concat);
    if !delta.is_finite() {
        return Err(Error::NonFinite("bpr_triple_gradients"));
    }
    let c = bpr_slope(delta);

    let d2: Vec<f64> = ri.layer2().iter().zip(rj.layer2()).map(|(a, b)| a - b).collect();
    let dm1: Vec<f64> = ri.layer1().iter().zip(rj.layer1()).map(|(a, b)| a - b).collect();
    let dx: Vec<f64> = x_i.iter().zip(x_j).map(|(a, b)| a - b).collect();
    // Sensitivity of the score to the user's m1, through the partner difference.
    let d1: Vec<f64> = dm1
        .iter()
        .zip(mat_vec(&p.w2, &d2))
        .map(|(a, b)| a + b)
        .collect();
    // Sensitivity of the score to an item's m1, through the user.
    let g1u: Vec<f64> = ru
        .layer1()
        .iter()
        .zip(mat_vec(&p.w2, ru.layer2()))
        .map(|(a, b)| a + b)
        .collect();

    let mut g = p.zeros_like();
    let h = p.hidden();
    for a in 0..p.input_dim() {
        let row = g.w1.row_mut(a);
        let (xu, dxa) = (x_u[a], dx[a]);
        for b in 0..h {
            row[b] = c * (xu * d1[b] + dxa * g1u[b]);
        }
    }
    for a in 0..h {
        let row = g.w2.row_mut(a);
        let (m1u, dm) = (ru.layer1()[a], dm1[a]);
        for b in 0..h {
            row[b] = c * (m1u * d2[b] + dm * ru.layer2()[b]);
        }
    }
    if p.use_bias {
        g.b1.iter_mut().zip(&d1).for_each(|(gb, v)| *gb = c * v);
        g.b2.iter_mut().zip(&d2).for_each(|(gb, v)| *gb = c * v);
    }
    if !g.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("bpr_triple_gradients"));
    }
    Ok((bpr_term(delta), g))
}

/// Mean BPR loss over a batch of `(user, positive, negative)` embedding rows
/// plus `l2·(‖W1‖² + ‖W2‖²)`, with its gradient.
pub fn bpr_batch_gradients(
    p: &ModelParams,
    xu: &DenseMatrix,
    xi: &DenseMatrix,
    xj: &DenseMatrix,
    l2: f64,
) -> Result<(f64, ModelParams)> {
    let t = xu.rows();
    if xi.rows() != t || xj.rows() != t {
        return Err(Error::dims("bpr_batch_gradients", "batch blocks differ in length"));
    }
    let mut g = p.zeros_like();
    if t == 0 {
        return Ok((l2 * p.weight_sq_norm(), g));
    }
    let (m1u, m2u) = forward_batch(p, xu)?;
    let (m1i, m2i) = forward_batch(p, xi)?;
    let (m1j, m2j) = forward_batch(p, xj)?;

    let h = p.hidden();
    let mut dx = DenseMatrix::zeros(t, p.input_dim());
    let mut dm1 = DenseMatrix::zeros(t, h);
    let mut d2 = DenseMatrix::zeros(t, h);
    let mut coeff = Vec::with_capacity(t);
    let mut loss = 0.0;
    for r in 0..t {
        let su = |a: &[f64], b: &[f64], c: &[f64]| dot(xu.row(r), a) + dot(m1u.row(r), b) + dot(m2u.row(r), c);
        let delta = su(xi.row(r), m1i.row(r), m2i.row(r)) - su(xj.row(r), m1j.row(r), m2j.row(r));
        if !delta.is_finite() {
            return Err(Error::NonFinite("bpr_batch_gradients"));
        }
        loss += bpr_term(delta);
        coeff.push(bpr_slope(delta) / t as f64);
        for (o, (a, b)) in dx.row_mut(r).iter_mut().zip(xi.row(r).iter().zip(xj.row(r))) {
            *o = a - b;
        }
        for (o, (a, b)) in dm1.row_mut(r).iter_mut().zip(m1i.row(r).iter().zip(m1j.row(r))) {
            *o = a - b;
        }
        for (o, (a, b)) in d2.row_mut(r).iter_mut().zip(m2i.row(r).iter().zip(m2j.row(r))) {
            *o = a - b;
        }
    }
    loss /= t as f64;

    // Row forms: D1 = dM1 + D2·W2ᵀ, G1u = M1u + M2u·W2ᵀ.
    let w2t = p.w2.transpose();
    let mut d1 = d2.matmul(&w2t)?;
    add_into(&mut d1, &dm1);
    let mut g1u = m2u.matmul(&w2t)?;
    add_into(&mut g1u, &m1u);

    let cd1 = scale_rows(&d1, &coeff);
    let cd2 = scale_rows(&d2, &coeff);
    let cg1u = scale_rows(&g1u, &coeff);
    let cm2u = scale_rows(&m2u, &coeff);

    let mut gw1 = xu.t_matmul(&cd1)?;
    add_into(&mut gw1, &dx.t_matmul(&cg1u)?);
    let mut gw2 = m1u.t_matmul(&cd2)?;
    add_into(&mut gw2, &dm1.t_matmul(&cm2u)?);
    g.w1 = gw1;
    g.w2 = gw2;
    if p.use_bias {
        for r in 0..t {
            for (gb, v) in g.b1.iter_mut().zip(cd1.row(r)) {
                *gb += v;
            }
            for (gb, v) in g.b2.iter_mut().zip(cd2.row(r)) {
                *gb += v;
            }
        }
    }
    if l2 > 0.0 {
        loss += l2 * p.weight_sq_norm();
        for (gw, w) in g.w1.data_mut().iter_mut().zip(p.w1.data()) {
            *gw += 2.0 * l2 * w;
        }
        for (gw, w) in g.w2.data_mut().iter_mut().zip(p.w2.data()) {
            *gw += 2.0 * l2 * w;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("bpr_batch_gradients"));
    }
    Ok((loss, g))
}

fn add_into(a: &mut DenseMatrix, b: &DenseMatrix) {
    for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

fn scale_rows(m: &DenseMatrix, s: &[f64]) -> DenseMatrix {
    let mut out = m.clone();
    for (r, &f) in s.iter().enumerate() {
        out.row_mut(r).iter_mut().for_each(|v| *v *= f);
    }
    out
}
