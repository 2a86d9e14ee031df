//! Embedding + GRU + dense softmax classifier over beam-index sequences,
//! with exact gradients by backpropagation through time.
//!
//! Per step, with `x = embedding[b]` and previous state `q`:
//!
//! ```text
//! r  = sigmoid(W_r x + U_r q + c_r)
//! z  = sigmoid(W_z x + U_z q + c_z)
//! n  = tanh(W_q x + U_q (r * q) + c_q)
//! q' = (1 - z) * q + z * n
//! p  = softmax(W_f q' + c_f)
//! ```

use ndarray::{Array1, Array2, ArrayView1, Zip};
use rand::Rng;

use crate::dataset::BeamSequence;
use crate::error::{Error, Result};
use crate::rng;

/// Probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Codebook size: number of distinct beam indices.
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Number of base stations.
    pub outputs: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab == 0 || self.embed == 0 || self.hidden == 0 {
            return Err(Error::config(
                "vocab, embed and hidden sizes must be positive",
            ));
        }
        if self.outputs < 2 {
            return Err(Error::config("the output head needs at least 2 classes"));
        }
        Ok(())
    }
}

/// All learnable tensors. The same layout doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub dims: ModelDims,
    /// vocab x E
    pub embedding: Array2<f64>,
    /// H x E
    pub input_reset: Array2<f64>,
    pub input_update: Array2<f64>,
    pub input_cand: Array2<f64>,
    /// H x H
    pub hidden_reset: Array2<f64>,
    pub hidden_update: Array2<f64>,
    pub hidden_cand: Array2<f64>,
    pub bias_reset: Array1<f64>,
    pub bias_update: Array1<f64>,
    pub bias_cand: Array1<f64>,
    /// N x H
    pub out_weight: Array2<f64>,
    pub out_bias: Array1<f64>,
}

pub const NUM_TENSORS: usize = 12;

/// Intermediates of one GRU step kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub beam: usize,
    pub x: Array1<f64>,
    pub q_prev: Array1<f64>,
    pub reset: Array1<f64>,
    pub update: Array1<f64>,
    pub cand: Array1<f64>,
    pub reset_q: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub probs: Vec<Array1<f64>>,
    /// `q_1 .. q_T`.
    pub hidden: Vec<Array1<f64>>,
    pub caches: Vec<StepCache>,
}

impl Forward {
    pub fn predictions(&self) -> impl Iterator<Item = usize> + '_ {
        self.probs.iter().map(|p| argmax(p.view()))
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(a: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in a.iter().enumerate() {
        if v > a[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(a: ArrayView1<f64>) -> Array1<f64> {
    let max = a.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut e = a.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e /= sum;
    e
}

/// `g += a b^T`
fn add_outer(g: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in g.rows_mut().into_iter().zip(a) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}

impl GruModel {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            vocab,
            embed: e,
            hidden: h,
            outputs: n,
        } = dims;
        GruModel {
            dims,
            embedding: Array2::zeros((vocab, e)),
            input_reset: Array2::zeros((h, e)),
            input_update: Array2::zeros((h, e)),
            input_cand: Array2::zeros((h, e)),
            hidden_reset: Array2::zeros((h, h)),
            hidden_update: Array2::zeros((h, h)),
            hidden_cand: Array2::zeros((h, h)),
            bias_reset: Array1::zeros(h),
            bias_update: Array1::zeros(h),
            bias_cand: Array1::zeros(h),
            out_weight: Array2::zeros((n, h)),
            out_bias: Array1::zeros(n),
        }
    }

    /// Uniform `[-1/sqrt(H), 1/sqrt(H)]` weights, zero biases and a
    /// `[-0.1, 0.1]` embedding table.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut model = GruModel::zeros(dims);
        let mut rng = rng::stream(seed, "init", 0);
        let k = 1.0 / (dims.hidden as f64).sqrt();
        model
            .embedding
            .mapv_inplace(|_| rng.random_range(-0.1..=0.1));
        for w in [
            &mut model.input_reset,
            &mut model.input_update,
            &mut model.input_cand,
            &mut model.hidden_reset,
            &mut model.hidden_update,
            &mut model.hidden_cand,
            &mut model.out_weight,
        ] {
            w.mapv_inplace(|_| rng.random_range(-k..=k));
        }
        Ok(model)
    }

    /// Parameters in checkpoint order, each row-major.
    pub fn tensors(&self) -> [&[f64]; NUM_TENSORS] {
        fn s<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
            a.as_slice().expect("parameters are contiguous")
        }
        [
            s(&self.embedding),
            s(&self.input_reset),
            s(&self.input_update),
            s(&self.input_cand),
            s(&self.hidden_reset),
            s(&self.hidden_update),
            s(&self.hidden_cand),
            s(&self.bias_reset),
            s(&self.bias_update),
            s(&self.bias_cand),
            s(&self.out_weight),
            s(&self.out_bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; NUM_TENSORS] {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        [
            s(&mut self.embedding),
            s(&mut self.input_reset),
            s(&mut self.input_update),
            s(&mut self.input_cand),
            s(&mut self.hidden_reset),
            s(&mut self.hidden_update),
            s(&mut self.hidden_cand),
            s(&mut self.bias_reset),
            s(&mut self.bias_update),
            s(&mut self.bias_cand),
            s(&mut self.out_weight),
            s(&mut self.out_bias),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn embed(&self, beam: usize) -> Result<ArrayView1<'_, f64>> {
        if beam >= self.dims.vocab {
            return Err(Error::contract(format!(
                "beam index {beam} outside 0..{}",
                self.dims.vocab
            )));
        }
        Ok(self.embedding.row(beam))
    }

    pub fn gru_step(
        &self,
        x: ArrayView1<f64>,
        q_prev: ArrayView1<f64>,
    ) -> (Array1<f64>, StepCache) {
        let mut reset =
            self.input_reset.dot(&x) + self.hidden_reset.dot(&q_prev) + &self.bias_reset;
        reset.mapv_inplace(sigmoid);
        let mut update =
            self.input_update.dot(&x) + self.hidden_update.dot(&q_prev) + &self.bias_update;
        update.mapv_inplace(sigmoid);
        let reset_q = &reset * &q_prev;
        let mut cand = self.input_cand.dot(&x) + self.hidden_cand.dot(&reset_q) + &self.bias_cand;
        cand.mapv_inplace(f64::tanh);
        let q = Zip::from(&update)
            .and(&q_prev)
            .and(&cand)
            .map_collect(|&z, &q, &n| (1.0 - z) * q + z * n);
        let cache = StepCache {
            beam: usize::MAX,
            x: x.to_owned(),
            q_prev: q_prev.to_owned(),
            reset,
            update,
            cand,
            reset_q,
        };
        (q, cache)
    }

    /// Output distribution over base stations and its argmax.
    pub fn predict_step(&self, q: ArrayView1<f64>) -> (Array1<f64>, usize) {
        let logits = self.out_weight.dot(&q) + &self.out_bias;
        let probs = softmax(logits.view());
        let best = argmax(probs.view());
        (probs, best)
    }

    /// Runs the whole sequence from a zero initial state.
    pub fn forward(&self, beams: &[usize]) -> Result<Forward> {
        if beams.is_empty() {
            return Err(Error::contract("cannot run the model on an empty sequence"));
        }
        let t_len = beams.len();
        let mut out = Forward {
            probs: Vec::with_capacity(t_len),
            hidden: Vec::with_capacity(t_len),
            caches: Vec::with_capacity(t_len),
        };
        let mut q = Array1::zeros(self.dims.hidden);
        for &b in beams {
            let x = self.embed(b)?;
            let (q_next, mut cache) = self.gru_step(x, q.view());
            cache.beam = b;
            let (probs, _) = self.predict_step(q_next.view());
            out.probs.push(probs);
            out.caches.push(cache);
            out.hidden.push(q_next.clone());
            q = q_next;
        }
        Ok(out)
    }

    /// Predicted next base station at every step.
    pub fn predict(&self, beams: &[usize]) -> Result<Vec<usize>> {
        Ok(self.forward(beams)?.predictions().collect())
    }

    /// Gradients of `loss(fwd.probs, labels)` with respect to every parameter.
    pub fn backward(&self, fwd: &Forward, labels: &[usize]) -> Result<GruModel> {
        check_labels(&fwd.probs, labels, self.dims.outputs)?;
        let mut g = GruModel::zeros(self.dims);
        let mut dq_next = Array1::<f64>::zeros(self.dims.hidden);

        for t in (0..labels.len()).rev() {
            let cache = &fwd.caches[t];
            let q = &fwd.hidden[t];

            let mut dlogits = fwd.probs[t].clone();
            if fwd.probs[t][labels[t]] < LOG_FLOOR {
                // the clamped log is flat here
                dlogits.fill(0.0);
            } else {
                dlogits[labels[t]] -= 1.0;
            }
            add_outer(&mut g.out_weight, &dlogits, q);
            g.out_bias += &dlogits;
            let dq = self.out_weight.t().dot(&dlogits) + &dq_next;

            let StepCache {
                x,
                q_prev,
                reset,
                update,
                cand,
                reset_q,
                ..
            } = cache;

            // q' = (1 - z) q + z n
            let dcand_pre = Zip::from(&dq)
                .and(update)
                .and(cand)
                .map_collect(|&d, &z, &n| d * z * (1.0 - n * n));
            let dupdate_pre = Zip::from(&dq)
                .and(update)
                .and(cand)
                .and(q_prev)
                .map_collect(|&d, &z, &n, &qp| d * (n - qp) * z * (1.0 - z));
            let mut dq_prev = Zip::from(&dq)
                .and(update)
                .map_collect(|&d, &z| d * (1.0 - z));

            add_outer(&mut g.input_cand, &dcand_pre, x);
            add_outer(&mut g.hidden_cand, &dcand_pre, reset_q);
            g.bias_cand += &dcand_pre;
            let dreset_q = self.hidden_cand.t().dot(&dcand_pre);
            dq_prev += &(&dreset_q * reset);
            let dreset_pre = Zip::from(&dreset_q)
                .and(q_prev)
                .and(reset)
                .map_collect(|&d, &qp, &r| d * qp * r * (1.0 - r));

            add_outer(&mut g.input_update, &dupdate_pre, x);
            add_outer(&mut g.hidden_update, &dupdate_pre, q_prev);
            g.bias_update += &dupdate_pre;
            dq_prev += &self.hidden_update.t().dot(&dupdate_pre);

            add_outer(&mut g.input_reset, &dreset_pre, x);
            add_outer(&mut g.hidden_reset, &dreset_pre, q_prev);
            g.bias_reset += &dreset_pre;
            dq_prev += &self.hidden_reset.t().dot(&dreset_pre);

            let dx = self.input_cand.t().dot(&dcand_pre)
                + self.input_update.t().dot(&dupdate_pre)
                + self.input_reset.t().dot(&dreset_pre);
            let mut row = g.embedding.row_mut(cache.beam);
            row += &dx;

            dq_next = dq_prev;
        }
        Ok(g)
    }

    /// Forward, summed cross-entropy and gradients for one sequence.
    pub fn loss_and_grad(&self, seq: &BeamSequence) -> Result<(f64, GruModel)> {
        let fwd = self.forward(&seq.beams)?;
        let loss = loss(&fwd.probs, &seq.labels)?;
        let grads = self.backward(&fwd, &seq.labels)?;
        Ok((loss, grads))
    }

    pub fn sequence_loss(&self, seq: &BeamSequence) -> Result<f64> {
        loss(&self.forward(&seq.beams)?.probs, &seq.labels)
    }
}

fn check_labels(probs: &[Array1<f64>], labels: &[usize], outputs: usize) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} predictions but {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= outputs) {
        return Err(Error::contract(format!("label {l} outside 0..{outputs}")));
    }
    Ok(())
}

/// Cross-entropy against one-hot targets, summed over time steps.
pub fn loss(probs: &[Array1<f64>], labels: &[usize]) -> Result<f64> {
    let outputs = probs.first().map_or(0, |p| p.len());
    check_labels(probs, labels, outputs)?;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(p, &l)| -p[l].max(LOG_FLOOR).ln())
        .sum())
}
