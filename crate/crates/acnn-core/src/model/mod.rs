//! The attentive convolutional classifier: conv + ReLU over time, max-pool,
//! softmax attention over pooled steps, then a dense softmax head on the
//! concatenation of the attentive vector and the flattened pooled maps.
//! Training is plain minibatch Adam on cross-entropy.

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_meta, save_checkpoint, write_meta};

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{
    attention_backward, attention_forward, conv1d_backward_weights, conv1d_forward, cross_entropy,
    cross_entropy_grad_logits, dense_backward, dense_softmax_forward, dropout_mask,
    maxpool_backward, maxpool_forward, AdamConfig, AdamState, NumericError, Tensor2,
};

/// Input rows every model expects: the filter-bank count of the frontend.
pub const N_BANDS: usize = 26;

/// Architecture and training knobs. `Default` gives the stride-30
/// configuration (24 attention steps on 7.5 s input); [`HyperParams::figures`]
/// widens the pool stride to 92 so the same input yields 8 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub n_kernels: usize,
    pub kernel_width: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub batch_size: usize,
    pub dropout_keep: f64,
    pub epochs: usize,
    pub ft_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            n_kernels: 200,
            kernel_width: 10,
            pool_size: 30,
            pool_stride: 30,
            batch_size: 32,
            dropout_keep: 0.5,
            epochs: 50,
            ft_epochs: 10,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl HyperParams {
    /// Pool stride 92: a 7.5 s input pools to exactly 8 attention steps.
    pub fn figures() -> Self {
        Self {
            pool_stride: 92,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.n_kernels >= 1
            && self.kernel_width >= 1
            && self.pool_size >= 1
            && self.pool_stride >= 1
            && self.batch_size >= 1
            && self.dropout_keep > 0.0
            && self.dropout_keep <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidHyperParams {
                detail: format!("{self:?}"),
            })
        }
    }

    /// Attention steps for an input of `t` frames:
    /// `floor((t - w + 1 - p)/s) + 1`.
    pub fn pooled_len(&self, t: usize) -> Result<usize, ModelError> {
        if t < self.kernel_width {
            return Err(ModelError::InvalidHyperParams {
                detail: format!("input length {t} shorter than kernel width {}", self.kernel_width),
            });
        }
        let conv_len = t - self.kernel_width + 1;
        if conv_len < self.pool_size {
            return Err(ModelError::InvalidHyperParams {
                detail: format!("conv length {conv_len} shorter than pool size {}", self.pool_size),
            });
        }
        Ok((conv_len - self.pool_size) / self.pool_stride + 1)
    }

    /// Dense-layer input width: attentive vector plus flattened pooled maps.
    pub fn hidden_dim(&self, t: usize) -> Result<usize, ModelError> {
        Ok(self.n_kernels * (1 + self.pooled_len(t)?))
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kernels: Vec<Tensor2>,
    pub conv_biases: Vec<f64>,
    pub attention_w: Vec<f64>,
    pub dense_w: Tensor2,
    pub dense_b: [f64; 2],
}

impl ModelParams {
    pub fn n_kernels(&self) -> usize {
        self.kernels.len()
    }

    /// Total scalar parameter count.
    pub fn dim(&self) -> usize {
        let per_kernel = self.kernels.first().map_or(0, |k| k.rows() * k.cols());
        self.kernels.len() * per_kernel
            + self.conv_biases.len()
            + self.attention_w.len()
            + self.dense_w.rows() * self.dense_w.cols()
            + 2
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kernels: self
                .kernels
                .iter()
                .map(|k| Tensor2::zeros(k.rows(), k.cols()))
                .collect(),
            conv_biases: vec![0.0; self.conv_biases.len()],
            attention_w: vec![0.0; self.attention_w.len()],
            dense_w: Tensor2::zeros(self.dense_w.rows(), self.dense_w.cols()),
            dense_b: [0.0; 2],
        }
    }

    /// Fixed flattening order: kernels (in index order, row-major), conv
    /// biases, attention weights, dense weights (row-major), dense biases.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.clear();
        for k in &self.kernels {
            out.extend_from_slice(k.as_slice());
        }
        out.extend_from_slice(&self.conv_biases);
        out.extend_from_slice(&self.attention_w);
        out.extend_from_slice(self.dense_w.as_slice());
        out.extend_from_slice(&self.dense_b);
    }

    pub fn unflatten_from(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.dim(), "flat parameter block size changed");
        let mut pos = 0;
        for k in &mut self.kernels {
            let n = k.rows() * k.cols();
            k.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        let n = self.conv_biases.len();
        self.conv_biases.copy_from_slice(&flat[pos..pos + n]);
        pos += n;
        let n = self.attention_w.len();
        self.attention_w.copy_from_slice(&flat[pos..pos + n]);
        pos += n;
        let n = self.dense_w.rows() * self.dense_w.cols();
        self.dense_w.as_mut_slice().copy_from_slice(&flat[pos..pos + n]);
        pos += n;
        self.dense_b.copy_from_slice(&flat[pos..pos + 2]);
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.kernels.iter_mut().zip(&other.kernels) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
        for (x, y) in self.conv_biases.iter_mut().zip(&other.conv_biases) {
            *x += y;
        }
        for (x, y) in self.attention_w.iter_mut().zip(&other.attention_w) {
            *x += y;
        }
        for (x, y) in self
            .dense_w
            .as_mut_slice()
            .iter_mut()
            .zip(other.dense_w.as_slice())
        {
            *x += y;
        }
        self.dense_b[0] += other.dense_b[0];
        self.dense_b[1] += other.dense_b[1];
    }

    fn scale(&mut self, c: f64) {
        for k in &mut self.kernels {
            for x in k.as_mut_slice() {
                *x *= c;
            }
        }
        for x in &mut self.conv_biases {
            *x *= c;
        }
        for x in &mut self.attention_w {
            *x *= c;
        }
        for x in self.dense_w.as_mut_slice() {
            *x *= c;
        }
        self.dense_b[0] *= c;
        self.dense_b[1] *= c;
    }

    pub fn is_finite(&self) -> bool {
        self.kernels.iter().all(|k| k.is_finite())
            && self.conv_biases.iter().all(|v| v.is_finite())
            && self.attention_w.iter().all(|v| v.is_finite())
            && self.dense_w.is_finite()
            && self.dense_b.iter().all(|v| v.is_finite())
    }
}

/// Model output for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: [f64; 2],
    pub alpha: Vec<f64>,
}

/// Intermediate activations needed by the backward pass.
pub struct ForwardCache {
    conv_out: Tensor2,
    argmax: Vec<Vec<usize>>,
    pooled: Tensor2,
    alpha: Vec<f64>,
    h_dropped: Vec<f64>,
    mask: Option<Vec<f64>>,
    probs: [f64; 2],
}

/// One labelled training example. Features are shared so folds and merged
/// corpora can reference the same matrix without copying.
#[derive(Debug, Clone)]
pub struct Sample {
    pub features: Arc<Tensor2>,
    pub label: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid hyperparameters ({detail})")]
    InvalidHyperParams { detail: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint ({detail})")]
    Checkpoint { detail: String },
}

/// Fresh parameters: conv and dense weights uniform in `(-a, a)` with
/// `a = sqrt(6/(fan_in + fan_out))`, biases zero, attention weights zero so
/// the first forward attends uniformly.
pub fn init_params<R: Rng>(
    hp: &HyperParams,
    input_t: usize,
    rng: &mut R,
) -> Result<ModelParams, ModelError> {
    hp.validate()?;
    let t_pool = hp.pooled_len(input_t)?;
    let k = hp.n_kernels;
    let w = hp.kernel_width;

    let a_conv = (6.0 / (N_BANDS * w + k) as f64).sqrt();
    let uniform = |a: f64, n: usize, rng: &mut R| -> Vec<f64> {
        (0..n).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * a).collect()
    };
    let kernels: Vec<Tensor2> = (0..k)
        .map(|_| {
            Tensor2::from_vec(N_BANDS, w, uniform(a_conv, N_BANDS * w, rng))
                .expect("kernel shape")
        })
        .collect();

    let h_dim = k * (1 + t_pool);
    let a_dense = (6.0 / (h_dim + 2) as f64).sqrt();
    let dense_w =
        Tensor2::from_vec(2, h_dim, uniform(a_dense, 2 * h_dim, rng)).expect("dense shape");

    Ok(ModelParams {
        kernels,
        conv_biases: vec![0.0; k],
        attention_w: vec![0.0; k],
        dense_w,
        dense_b: [0.0; 2],
    })
}

/// Full forward pass. `mask` is a pre-sampled inverted-dropout mask over the
/// concatenated hidden vector; pass `None` for inference (no dropout at all).
pub fn forward(
    x: &Tensor2,
    params: &ModelParams,
    hp: &HyperParams,
    mask: Option<Vec<f64>>,
) -> Result<(Prediction, ForwardCache), ModelError> {
    let conv_out = conv1d_forward(x, &params.kernels, &params.conv_biases)?;
    let (pooled, argmax) = maxpool_forward(&conv_out, hp.pool_size, hp.pool_stride)?;
    let (alpha, attentive) = attention_forward(&pooled, &params.attention_w)?;

    let k = params.n_kernels();
    let t_pool = pooled.cols();
    let h_dim = k + k * t_pool;
    if params.dense_w.cols() != h_dim {
        return Err(NumericError::ShapeMismatch {
            op: "forward",
            detail: format!(
                "dense layer expects {} inputs, architecture produced {h_dim}",
                params.dense_w.cols()
            ),
        }
        .into());
    }

    // Hidden vector: [attentive | pooled maps row-major].
    let mut h = Vec::with_capacity(h_dim);
    h.extend_from_slice(&attentive);
    h.extend_from_slice(pooled.as_slice());
    if let Some(m) = &mask {
        if m.len() != h_dim {
            return Err(NumericError::ShapeMismatch {
                op: "forward",
                detail: format!("dropout mask len {} != hidden dim {h_dim}", m.len()),
            }
            .into());
        }
        for (v, &s) in h.iter_mut().zip(m) {
            *v *= s;
        }
    }

    let probs = dense_softmax_forward(&h, &params.dense_w, &params.dense_b)?;
    let class = if probs[1] > probs[0] { 1 } else { 0 };
    Ok((
        Prediction {
            class,
            probabilities: probs,
            alpha: alpha.clone(),
        },
        ForwardCache {
            conv_out,
            argmax,
            pooled,
            alpha,
            h_dropped: h,
            mask,
            probs,
        },
    ))
}

/// Inference-mode forward, prediction only.
pub fn predict(
    x: &Tensor2,
    params: &ModelParams,
    hp: &HyperParams,
) -> Result<Prediction, ModelError> {
    forward(x, params, hp, None).map(|(p, _)| p)
}

/// Cross-entropy loss and exact gradients for one sample, reusing the forward
/// cache. The gradient with respect to the input features is never needed and
/// is not computed.
pub fn backward(
    x: &Tensor2,
    params: &ModelParams,
    cache: &ForwardCache,
    label: usize,
) -> Result<(ModelParams, f64), ModelError> {
    let loss = cross_entropy(&cache.probs, label)?;
    let grad_logits = cross_entropy_grad_logits(&cache.probs, label)?;

    let (grad_dense_w, grad_dense_b, grad_h_dropped) =
        dense_backward(&cache.h_dropped, &params.dense_w, &grad_logits)?;

    let mut grad_h = grad_h_dropped;
    if let Some(m) = &cache.mask {
        for (g, &s) in grad_h.iter_mut().zip(m) {
            *g *= s;
        }
    }

    let k = params.n_kernels();
    let t_pool = cache.pooled.cols();
    let grad_attentive = &grad_h[..k];
    let grad_pooled_concat =
        Tensor2::from_vec(k, t_pool, grad_h[k..].to_vec()).expect("concat split shape");

    let (mut grad_pooled, grad_attention_w) = attention_backward(
        &cache.pooled,
        &params.attention_w,
        &cache.alpha,
        None,
        grad_attentive,
    )?;
    for (g, &c) in grad_pooled
        .as_mut_slice()
        .iter_mut()
        .zip(grad_pooled_concat.as_slice())
    {
        *g += c;
    }

    let grad_conv_out = maxpool_backward(&grad_pooled, &cache.argmax, cache.conv_out.cols())?;
    let (grad_kernels, grad_conv_biases, _) =
        conv1d_backward_weights(&grad_conv_out, x, &params.kernels, &cache.conv_out)?;

    Ok((
        ModelParams {
            kernels: grad_kernels,
            conv_biases: grad_conv_biases,
            attention_w: grad_attention_w,
            dense_w: grad_dense_w,
            dense_b: grad_dense_b,
        },
        loss,
    ))
}

/// One epoch of shuffled minibatch training; one Adam step per batch on the
/// batch-mean gradient. Returns the epoch-mean training loss.
///
/// Dropout masks are drawn sequentially from `rng` before each batch fans out,
/// and per-sample gradients are reduced in deterministic order, so results do
/// not depend on worker-thread count.
pub fn train_epoch<R: Rng>(
    samples: &[Sample],
    params: &mut ModelParams,
    hp: &HyperParams,
    adam: &mut AdamState,
    rng: &mut R,
) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    hp.validate()?;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let h_dim = params.dense_w.cols();

    let mut flat_params = Vec::with_capacity(params.dim());
    let mut flat_grads = Vec::with_capacity(params.dim());
    let mut total_loss = 0.0;
    for batch in order.chunks(hp.batch_size) {
        let masks: Vec<Option<Vec<f64>>> = batch
            .iter()
            .map(|_| {
                (hp.dropout_keep < 1.0).then(|| dropout_mask(h_dim, hp.dropout_keep, rng))
            })
            .collect();

        let results: Result<Vec<(ModelParams, f64)>, ModelError> = batch
            .par_iter()
            .zip(masks.into_par_iter())
            .map(|(&i, mask)| {
                let s = &samples[i];
                let (_, cache) = forward(&s.features, params, hp, mask)?;
                backward(&s.features, params, &cache, s.label)
            })
            .collect();

        let mut grad_acc = params.zeros_like();
        let results = results?;
        for (g, loss) in &results {
            grad_acc.add_assign(g);
            total_loss += loss;
        }
        grad_acc.scale(1.0 / batch.len() as f64);

        params.flatten_into(&mut flat_params);
        grad_acc.flatten_into(&mut flat_grads);
        adam.step(&mut flat_params, &flat_grads, &hp.adam);
        params.unflatten_from(&flat_params);
    }
    Ok(total_loss / samples.len() as f64)
}

/// Mean recall over the classes present in `samples` (inference mode).
pub fn mean_recall(
    params: &ModelParams,
    hp: &HyperParams,
    samples: &[Sample],
) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut correct = [0usize; 2];
    let mut total = [0usize; 2];
    for s in samples {
        let p = predict(&s.features, params, hp)?;
        total[s.label] += 1;
        if p.class == s.label {
            correct[s.label] += 1;
        }
    }
    let recalls: Vec<f64> = (0..2)
        .filter(|&c| total[c] > 0)
        .map(|c| correct[c] as f64 / total[c] as f64)
        .collect();
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_uar: f64,
}

pub struct FitResult {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were returned; `None` when no dev selection
    /// happened (empty dev set or zero epochs).
    pub best_epoch: Option<usize>,
}

/// Trains for `hp.epochs` epochs and returns the parameters of the epoch with
/// the best dev recall (ties keep the earlier epoch). With an empty dev set no
/// selection happens and the final parameters are returned.
pub fn fit<R: Rng>(
    train: &[Sample],
    dev: &[Sample],
    init: ModelParams,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<FitResult, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    hp.validate()?;

    let mut params = init;
    let mut adam = AdamState::new(params.dim());
    let mut history = Vec::with_capacity(hp.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    for epoch in 0..hp.epochs {
        let train_loss = train_epoch(train, &mut params, hp, &mut adam, rng)?;
        let dev_uar = if dev.is_empty() {
            f64::NAN
        } else {
            mean_recall(&params, hp, dev)?
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            dev_uar,
        });
        let improved = match &best {
            Some((b, _, _)) => dev_uar > *b,
            None => dev_uar.is_finite(),
        };
        if improved {
            best = Some((dev_uar, epoch, params.clone()));
        }
    }
    match best {
        Some((_, epoch, p)) => Ok(FitResult {
            params: p,
            history,
            best_epoch: Some(epoch),
        }),
        None => Ok(FitResult {
            params,
            history,
            best_epoch: None,
        }),
    }
}

/// Continues training an already-trained model on target-domain samples for
/// `hp.ft_epochs` epochs with a fresh optimizer state; all layers stay
/// trainable. Returns the final parameters and the loss trace.
pub fn fine_tune<R: Rng>(
    params: ModelParams,
    target: &[Sample],
    hp: &HyperParams,
    rng: &mut R,
) -> Result<(ModelParams, Vec<f64>), ModelError> {
    if target.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    hp.validate()?;
    let mut params = params;
    let mut adam = AdamState::new(params.dim());
    let mut losses = Vec::with_capacity(hp.ft_epochs);
    for _ in 0..hp.ft_epochs {
        losses.push(train_epoch(target, &mut params, hp, &mut adam, rng)?);
    }
    Ok((params, losses))
}
