//! Triplet-margin training of the projection layer.
//!
//! The loss for one (query, positive, negative) triplet is
//! `max(0, margin − maxsim(q, pos) + maxsim(q, neg))`, where every token row
//! is `normalize(xᵀW)`. Gradients are exact: the max picks a single document
//! row per query row (lowest index on ties) and the normalization Jacobian
//! `(I − e eᵀ)/‖u‖` is applied per row.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedder::TokenEmbedder;
use super::matrix::EmbeddingMatrix;
use super::projection::LinearProjection;
use super::EmbedError;
use crate::encode::EncodedSequence;
use crate::retrieve::maxsim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletTrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TripletTrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            learning_rate: 1e-3,
            epochs: 4,
            batch_size: 16,
            seed: 42,
        }
    }
}

impl TripletTrainConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(EmbedError::InvalidConfig("margin must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EmbedError::InvalidConfig(
                "learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::InvalidConfig(
                "batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Dense row-major f64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn from_projection(p: &LinearProjection) -> Self {
        Self {
            rows: p.d_in(),
            cols: p.d_out(),
            data: p.weights().iter().map(|&w| f64::from(w)).collect(),
        }
    }

    pub fn to_projection(&self) -> Result<LinearProjection, EmbedError> {
        LinearProjection::new(
            self.rows,
            self.cols,
            self.data.iter().map(|&w| w as f32).collect(),
        )
    }
}

/// Raw embedder rows of a sequence's real tokens, before projection.
pub fn raw_rows(
    seq: &EncodedSequence,
    embedder: &dyn TokenEmbedder,
) -> Result<DenseMatrix, EmbedError> {
    let dim = embedder.dim();
    let mut buf = vec![0f32; dim];
    let mut out = DenseMatrix::zeros(seq.real_length, dim);
    for (i, &tok) in seq.real_ids().iter().enumerate() {
        embedder.embed_into(tok, &mut buf)?;
        for (o, v) in out.data[i * dim..(i + 1) * dim].iter_mut().zip(&buf) {
            *o = f64::from(*v);
        }
    }
    Ok(out)
}

/// Inputs of one training triplet, as raw embedder rows.
#[derive(Debug, Clone)]
pub struct TripletExample {
    pub query: DenseMatrix,
    pub positive: DenseMatrix,
    pub negative: DenseMatrix,
}

/// `max(0, margin − maxsim(q,pos) + maxsim(q,neg))` on embedded matrices.
/// An empty negative scores −∞ and yields zero loss.
pub fn triplet_loss(
    q: &EmbeddingMatrix,
    pos: &EmbeddingMatrix,
    neg: &EmbeddingMatrix,
    margin: f32,
) -> f32 {
    let s_pos = maxsim(q, pos);
    let s_neg = maxsim(q, neg);
    if s_neg == f32::NEG_INFINITY {
        return 0.0;
    }
    (margin - s_pos + s_neg).max(0.0)
}

struct Projected {
    cols: usize,
    /// Normalized rows; zero rows stay zero.
    e: Vec<f64>,
    inv_norm: Vec<f64>,
}

impl Projected {
    fn row(&self, i: usize) -> &[f64] {
        &self.e[i * self.cols..(i + 1) * self.cols]
    }

    fn is_zero(&self, i: usize) -> bool {
        self.inv_norm[i] == 0.0
    }

    fn n_rows(&self) -> usize {
        self.inv_norm.len()
    }
}

fn project(x: &DenseMatrix, w: &DenseMatrix) -> Projected {
    let d_out = w.cols;
    let mut e = vec![0.0; x.rows * d_out];
    let mut inv_norm = vec![0.0; x.rows];
    for r in 0..x.rows {
        let u = &mut e[r * d_out..(r + 1) * d_out];
        for (xi, wrow) in x.row(r).iter().zip(w.data.chunks_exact(d_out)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, wv) in u.iter_mut().zip(wrow) {
                *o += xi * wv;
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
            inv_norm[r] = 1.0 / norm;
        }
    }
    Projected {
        cols: d_out,
        e,
        inv_norm,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Score and per-query-row argmax (lowest index on ties). `None` when the
/// document has no scorable rows.
fn maxsim_with_argmax(q: &Projected, d: &Projected) -> Option<(f64, Vec<Option<usize>>)> {
    if (0..d.n_rows()).all(|j| d.is_zero(j)) {
        return None;
    }
    let mut total = 0.0;
    let mut arg = vec![None; q.n_rows()];
    for i in 0..q.n_rows() {
        if q.is_zero(i) {
            continue;
        }
        let qi = q.row(i);
        let mut best = f64::NEG_INFINITY;
        for j in 0..d.n_rows() {
            if d.is_zero(j) {
                continue;
            }
            let s = dot(qi, d.row(j));
            if s > best {
                best = s;
                arg[i] = Some(j);
            }
        }
        total += best;
    }
    Some((total, arg))
}

struct Forward {
    q: Projected,
    p: Projected,
    n: Projected,
    arg_p: Vec<Option<usize>>,
    arg_n: Option<Vec<Option<usize>>>,
    loss: f64,
}

fn forward(ex: &TripletExample, w: &DenseMatrix, margin: f64) -> Forward {
    let q = project(&ex.query, w);
    let p = project(&ex.positive, w);
    let n = project(&ex.negative, w);
    let (s_pos, arg_p) = maxsim_with_argmax(&q, &p).unwrap_or((f64::NEG_INFINITY, Vec::new()));
    let neg = maxsim_with_argmax(&q, &n);
    let loss = match &neg {
        None => 0.0,
        Some((s_neg, _)) => (margin - s_pos + s_neg).max(0.0),
    };
    Forward {
        q,
        p,
        n,
        arg_p,
        arg_n: neg.map(|(_, a)| a),
        loss,
    }
}

/// Loss of one triplet under weights `w`.
pub fn triplet_loss_raw(ex: &TripletExample, w: &DenseMatrix, margin: f64) -> f64 {
    forward(ex, w, margin).loss
}

/// Accumulate `x_r ⊗ (I − e eᵀ) g / ‖u‖` over rows into `grad`.
fn backprop_rows(x: &DenseMatrix, proj: &Projected, grad_e: &[f64], grad: &mut DenseMatrix) {
    let d_out = proj.cols;
    let mut g_u = vec![0.0; d_out];
    for r in 0..proj.n_rows() {
        if proj.is_zero(r) {
            continue;
        }
        let g = &grad_e[r * d_out..(r + 1) * d_out];
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let e = proj.row(r);
        let radial = dot(g, e);
        for k in 0..d_out {
            g_u[k] = (g[k] - radial * e[k]) * proj.inv_norm[r];
        }
        for (xi, grow) in x.row(r).iter().zip(grad.data.chunks_exact_mut(d_out)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, gu) in grow.iter_mut().zip(&g_u) {
                *o += xi * gu;
            }
        }
    }
}

fn accumulate_gradient(ex: &TripletExample, fw: &Forward, scale: f64, grad: &mut DenseMatrix) {
    if fw.loss <= 0.0 {
        return;
    }
    let d_out = grad.cols;
    let mut g_q = vec![0.0; fw.q.n_rows() * d_out];
    let mut g_p = vec![0.0; fw.p.n_rows() * d_out];
    let mut g_n = vec![0.0; fw.n.n_rows() * d_out];
    // dL/dS_pos = −1, dL/dS_neg = +1
    let sides: [(f64, &Projected, &[Option<usize>], &mut Vec<f64>); 2] = [
        (-scale, &fw.p, &fw.arg_p, &mut g_p),
        (scale, &fw.n, fw.arg_n.as_deref().unwrap_or(&[]), &mut g_n),
    ];
    for (coef, doc, arg, g_doc) in sides {
        for (i, j) in arg.iter().enumerate() {
            let Some(j) = *j else { continue };
            let qi = fw.q.row(i);
            let dj = doc.row(j);
            for k in 0..d_out {
                g_q[i * d_out + k] += coef * dj[k];
                g_doc[j * d_out + k] += coef * qi[k];
            }
        }
    }
    backprop_rows(&ex.query, &fw.q, &g_q, grad);
    backprop_rows(&ex.positive, &fw.p, &g_p, grad);
    backprop_rows(&ex.negative, &fw.n, &g_n, grad);
}

/// Analytic gradient of the triplet loss with respect to `w`.
pub fn gradient_of_loss(ex: &TripletExample, w: &DenseMatrix, margin: f64) -> DenseMatrix {
    let fw = forward(ex, w, margin);
    let mut grad = DenseMatrix::zeros(w.rows, w.cols);
    accumulate_gradient(ex, &fw, 1.0, &mut grad);
    grad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean loss under the initial weights.
    pub initial_loss: f64,
    /// Mean loss seen during each epoch's pass.
    pub epoch_losses: Vec<f64>,
    /// Mean loss under the returned weights.
    pub final_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub projection: LinearProjection,
    pub trace: TrainTrace,
}

fn mean_loss(examples: &[TripletExample], w: &DenseMatrix, margin: f64) -> f64 {
    examples
        .iter()
        .map(|ex| triplet_loss_raw(ex, w, margin))
        .sum::<f64>()
        / examples.len() as f64
}

/// Mini-batch SGD on the mean triplet loss.
pub fn train_projection(
    examples: &[TripletExample],
    d_in: usize,
    d_out: usize,
    cfg: &TripletTrainConfig,
) -> Result<TrainOutcome, EmbedError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(EmbedError::NoTriplets);
    }
    for ex in examples {
        for m in [&ex.query, &ex.positive, &ex.negative] {
            if m.cols != d_in {
                return Err(EmbedError::DimensionMismatch {
                    embedder: m.cols,
                    projection: d_in,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = LinearProjection::seeded_with(d_in, d_out, &mut rng)?;
    let mut w = DenseMatrix::from_projection(&init);
    let initial_loss = mean_loss(examples, &w, cfg.margin);
    if !initial_loss.is_finite() {
        return Err(EmbedError::NonFiniteLoss {
            epoch: 0,
            batch: 0,
            loss: initial_loss,
        });
    }
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            projection: init,
            trace: TrainTrace {
                initial_loss,
                epoch_losses: Vec::new(),
                final_loss: initial_loss,
            },
        });
    }

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut grad = DenseMatrix::zeros(d_in, d_out);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.data.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let fw = forward(&examples[i], &w, cfg.margin);
                batch_loss += fw.loss;
                accumulate_gradient(&examples[i], &fw, scale, &mut grad);
            }
            if !batch_loss.is_finite() || grad.data.iter().any(|g| !g.is_finite()) {
                return Err(EmbedError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    loss: batch_loss,
                });
            }
            epoch_loss += batch_loss;
            for (wv, g) in w.data.iter_mut().zip(&grad.data) {
                *wv -= cfg.learning_rate * g;
            }
        }
        epoch_losses.push(epoch_loss / examples.len() as f64);
    }
    let projection = w.to_projection()?;
    let final_loss = mean_loss(
        examples,
        &DenseMatrix::from_projection(&projection),
        cfg.margin,
    );
    Ok(TrainOutcome {
        projection,
        trace: TrainTrace {
            initial_loss,
            epoch_losses,
            final_loss,
        },
    })
}
