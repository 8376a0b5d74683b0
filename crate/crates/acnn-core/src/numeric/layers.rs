//! Forward and backward passes for the layers of the classifier, derived by
//! hand. Every backward here is checked against central finite differences in
//! the tests below.

use rand::Rng;

use super::tensor::Tensor2;
use super::NumericError;

/// 1-D convolution over time with ReLU. Each kernel spans all input rows
/// (`bands x width`), so the output per kernel is a single time series of
/// length `T - w + 1`.
///
/// `out[k][t] = relu(bias[k] + sum_{r,dt} kernel[k][r][dt] * input[r][t+dt])`
pub fn conv1d_forward(
    input: &Tensor2,
    kernels: &[Tensor2],
    biases: &[f64],
) -> Result<Tensor2, NumericError> {
    let bands = input.rows();
    let t_len = input.cols();
    let n_kernels = kernels.len();
    if n_kernels == 0 || biases.len() != n_kernels {
        return Err(NumericError::ShapeMismatch {
            op: "conv1d_forward",
            detail: format!("{} kernels, {} biases", n_kernels, biases.len()),
        });
    }
    let width = kernels[0].cols();
    for k in kernels {
        if k.rows() != bands || k.cols() != width {
            return Err(NumericError::ShapeMismatch {
                op: "conv1d_forward",
                detail: format!(
                    "kernel {}x{} does not match input rows {} / width {}",
                    k.rows(),
                    k.cols(),
                    bands,
                    width
                ),
            });
        }
    }
    if t_len < width {
        return Err(NumericError::ShapeMismatch {
            op: "conv1d_forward",
            detail: format!("input length {t_len} shorter than kernel width {width}"),
        });
    }

    let out_len = t_len - width + 1;
    let mut out = Tensor2::zeros(n_kernels, out_len);
    for (k, kernel) in kernels.iter().enumerate() {
        let out_row = out.row_mut(k);
        out_row.fill(biases[k]);
        for r in 0..bands {
            let x_row = input.row(r);
            let k_row = kernel.row(r);
            for (dt, &coeff) in k_row.iter().enumerate() {
                let x_shift = &x_row[dt..dt + out_len];
                for (o, &x) in out_row.iter_mut().zip(x_shift) {
                    *o += coeff * x;
                }
            }
        }
        for o in out_row.iter_mut() {
            if *o < 0.0 {
                *o = 0.0;
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv1d_forward`]. `out` is the forward result; positions
/// where it is zero were clipped by the ReLU and receive no gradient
/// (subgradient 0 at the kink).
pub fn conv1d_backward(
    grad_out: &Tensor2,
    input: &Tensor2,
    kernels: &[Tensor2],
    out: &Tensor2,
) -> Result<(Vec<Tensor2>, Vec<f64>, Tensor2), NumericError> {
    let (grad_kernels, grad_biases, masked) = conv1d_backward_weights(grad_out, input, kernels, out)?;

    let bands = input.rows();
    let out_len = grad_out.cols();
    let mut grad_input = Tensor2::zeros(bands, input.cols());
    for (k, kernel) in kernels.iter().enumerate() {
        let m_row = masked.row(k);
        for r in 0..bands {
            let k_row = kernel.row(r);
            let g_row = grad_input.row_mut(r);
            for (dt, &coeff) in k_row.iter().enumerate() {
                let g_shift = &mut g_row[dt..dt + out_len];
                for (g, &m) in g_shift.iter_mut().zip(m_row) {
                    *g += coeff * m;
                }
            }
        }
    }
    Ok((grad_kernels, grad_biases, grad_input))
}

/// Kernel and bias gradients only. The full model never needs the gradient
/// with respect to the feature matrix, which saves roughly a third of the
/// backward cost. Also returns the ReLU-masked output gradient.
pub fn conv1d_backward_weights(
    grad_out: &Tensor2,
    input: &Tensor2,
    kernels: &[Tensor2],
    out: &Tensor2,
) -> Result<(Vec<Tensor2>, Vec<f64>, Tensor2), NumericError> {
    let bands = input.rows();
    let n_kernels = kernels.len();
    if n_kernels == 0 {
        return Err(NumericError::ShapeMismatch {
            op: "conv1d_backward",
            detail: "no kernels".into(),
        });
    }
    let width = kernels[0].cols();
    let out_len = input.cols() + 1 - width;
    if grad_out.rows() != n_kernels
        || grad_out.cols() != out_len
        || out.rows() != n_kernels
        || out.cols() != out_len
    {
        return Err(NumericError::ShapeMismatch {
            op: "conv1d_backward",
            detail: format!(
                "grad_out {}x{}, out {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                out.rows(),
                out.cols(),
                n_kernels,
                out_len
            ),
        });
    }

    let mut masked = grad_out.clone();
    for k in 0..n_kernels {
        let o_row = out.row(k);
        for (m, &o) in masked.row_mut(k).iter_mut().zip(o_row) {
            if o <= 0.0 {
                *m = 0.0;
            }
        }
    }

    let mut grad_kernels = vec![Tensor2::zeros(bands, width); n_kernels];
    let mut grad_biases = vec![0.0; n_kernels];
    for k in 0..n_kernels {
        let m_row = masked.row(k);
        grad_biases[k] = m_row.iter().sum();
        let gk = &mut grad_kernels[k];
        for r in 0..bands {
            let x_row = input.row(r);
            let gk_row = gk.row_mut(r);
            for (dt, g) in gk_row.iter_mut().enumerate() {
                let x_shift = &x_row[dt..dt + out_len];
                *g = m_row.iter().zip(x_shift).map(|(&m, &x)| m * x).sum();
            }
        }
    }
    Ok((grad_kernels, grad_biases, masked))
}

/// Max-pooling over time, one row per feature map. Windows of length `pool`
/// start every `stride` positions; ties take the lowest index so the backward
/// routing is deterministic.
pub fn maxpool_forward(
    maps: &Tensor2,
    pool: usize,
    stride: usize,
) -> Result<(Tensor2, Vec<Vec<usize>>), NumericError> {
    let len = maps.cols();
    if pool == 0 || stride == 0 || len < pool {
        return Err(NumericError::ShapeMismatch {
            op: "maxpool_forward",
            detail: format!("length {len}, pool {pool}, stride {stride}"),
        });
    }
    let n_out = (len - pool) / stride + 1;
    let mut pooled = Tensor2::zeros(maps.rows(), n_out);
    let mut argmax = vec![vec![0usize; n_out]; maps.rows()];
    for k in 0..maps.rows() {
        let row = maps.row(k);
        for j in 0..n_out {
            let start = j * stride;
            let window = &row[start..start + pool];
            let mut best = window[0];
            let mut best_i = 0;
            for (i, &v) in window.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            pooled.set(k, j, best);
            argmax[k][j] = start + best_i;
        }
    }
    Ok((pooled, argmax))
}

/// Routes each pooled gradient back to its argmax position. Overlapping
/// windows accumulate.
pub fn maxpool_backward(
    grad_out: &Tensor2,
    argmax: &[Vec<usize>],
    map_len: usize,
) -> Result<Tensor2, NumericError> {
    if grad_out.rows() != argmax.len()
        || argmax.iter().any(|row| row.len() != grad_out.cols())
    {
        return Err(NumericError::ShapeMismatch {
            op: "maxpool_backward",
            detail: "argmax cache does not match gradient shape".into(),
        });
    }
    let mut grad = Tensor2::zeros(grad_out.rows(), map_len);
    for k in 0..grad_out.rows() {
        for j in 0..grad_out.cols() {
            let pos = argmax[k][j];
            let v = grad.get(k, pos) + grad_out.get(k, j);
            grad.set(k, pos, v);
        }
    }
    Ok(grad)
}

/// Numerically stable softmax (max-score subtraction).
pub fn stable_softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Soft attention over a sequence of column vectors. `x` holds one step per
/// column; scores are `w . x_i`, weights their softmax, and the output the
/// weight-averaged column.
pub fn attention_forward(
    x: &Tensor2,
    w: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NumericError> {
    let dim = x.rows();
    let steps = x.cols();
    if steps == 0 {
        return Err(NumericError::EmptySequence);
    }
    if w.len() != dim {
        return Err(NumericError::ShapeMismatch {
            op: "attention_forward",
            detail: format!("w has {} entries, x has {} rows", w.len(), dim),
        });
    }
    let mut scores = vec![0.0; steps];
    for (k, &wk) in w.iter().enumerate() {
        for (s, &v) in scores.iter_mut().zip(x.row(k)) {
            *s += wk * v;
        }
    }
    let alpha = stable_softmax(&scores);
    let mut attentive = vec![0.0; dim];
    for (k, a) in attentive.iter_mut().enumerate() {
        *a = alpha.iter().zip(x.row(k)).map(|(&al, &v)| al * v).sum();
    }
    Ok((alpha, attentive))
}

/// Gradients of [`attention_forward`] through both the weights and the
/// weighted sum. `grad_alpha` carries any loss gradient that reaches the
/// weights directly (pass `None` when the weights only feed the sum).
pub fn attention_backward(
    x: &Tensor2,
    w: &[f64],
    alpha: &[f64],
    grad_alpha: Option<&[f64]>,
    grad_attentive: &[f64],
) -> Result<(Tensor2, Vec<f64>), NumericError> {
    let dim = x.rows();
    let steps = x.cols();
    if alpha.len() != steps || grad_attentive.len() != dim || w.len() != dim {
        return Err(NumericError::ShapeMismatch {
            op: "attention_backward",
            detail: "cache shapes inconsistent".into(),
        });
    }
    if let Some(ga) = grad_alpha {
        if ga.len() != steps {
            return Err(NumericError::ShapeMismatch {
                op: "attention_backward",
                detail: "grad_alpha length".into(),
            });
        }
    }

    // dL/dalpha_i = grad_attentive . x_i (+ any direct alpha gradient)
    let mut d_alpha = vec![0.0; steps];
    for i in 0..steps {
        let mut acc = 0.0;
        for (k, &g) in grad_attentive.iter().enumerate() {
            acc += g * x.get(k, i);
        }
        if let Some(ga) = grad_alpha {
            acc += ga[i];
        }
        d_alpha[i] = acc;
    }

    // Softmax Jacobian: dL/ds_i = alpha_i * (dL/dalpha_i - sum_j alpha_j dL/dalpha_j)
    let dot: f64 = alpha.iter().zip(&d_alpha).map(|(&a, &d)| a * d).sum();
    let d_scores: Vec<f64> = alpha
        .iter()
        .zip(&d_alpha)
        .map(|(&a, &d)| a * (d - dot))
        .collect();

    let mut grad_x = Tensor2::zeros(dim, steps);
    for k in 0..dim {
        let row = grad_x.row_mut(k);
        for i in 0..steps {
            row[i] = alpha[i] * grad_attentive[k] + d_scores[i] * w[k];
        }
    }
    let mut grad_w = vec![0.0; dim];
    for (k, gw) in grad_w.iter_mut().enumerate() {
        *gw = d_scores.iter().zip(x.row(k)).map(|(&d, &v)| d * v).sum();
    }
    Ok((grad_x, grad_w))
}

/// Two-class dense layer with softmax: `softmax(Wd . h + bd)`.
pub fn dense_softmax_forward(
    h: &[f64],
    wd: &Tensor2,
    bd: &[f64],
) -> Result<[f64; 2], NumericError> {
    if wd.rows() != 2 || wd.cols() != h.len() || bd.len() != 2 {
        return Err(NumericError::ShapeMismatch {
            op: "dense_softmax_forward",
            detail: format!("Wd {}x{}, h {}, bd {}", wd.rows(), wd.cols(), h.len(), bd.len()),
        });
    }
    let mut logits = [bd[0], bd[1]];
    for c in 0..2 {
        logits[c] += wd.row(c).iter().zip(h).map(|(&w, &x)| w * x).sum::<f64>();
    }
    let p = stable_softmax(&logits);
    Ok([p[0], p[1]])
}

/// Gradients of the dense layer given `dL/dlogits`.
pub fn dense_backward(
    h: &[f64],
    wd: &Tensor2,
    grad_logits: &[f64; 2],
) -> Result<(Tensor2, [f64; 2], Vec<f64>), NumericError> {
    if wd.rows() != 2 || wd.cols() != h.len() {
        return Err(NumericError::ShapeMismatch {
            op: "dense_backward",
            detail: "Wd does not match h".into(),
        });
    }
    let mut grad_wd = Tensor2::zeros(2, h.len());
    for c in 0..2 {
        let row = grad_wd.row_mut(c);
        for (g, &x) in row.iter_mut().zip(h) {
            *g = grad_logits[c] * x;
        }
    }
    let mut grad_h = vec![0.0; h.len()];
    for c in 0..2 {
        let w_row = wd.row(c);
        for (g, &w) in grad_h.iter_mut().zip(w_row) {
            *g += grad_logits[c] * w;
        }
    }
    Ok((grad_wd, [grad_logits[0], grad_logits[1]], grad_h))
}

const PROB_FLOOR: f64 = 1e-12;

/// Negative log-likelihood of the true class, floored to keep the loss finite.
pub fn cross_entropy(probs: &[f64; 2], label: usize) -> Result<f64, NumericError> {
    if label > 1 {
        return Err(NumericError::InvalidLabel(label));
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}

/// Gradient of the cross-entropy at the softmax logits: `probs - onehot`.
pub fn cross_entropy_grad_logits(
    probs: &[f64; 2],
    label: usize,
) -> Result<[f64; 2], NumericError> {
    if label > 1 {
        return Err(NumericError::InvalidLabel(label));
    }
    let mut g = [probs[0], probs[1]];
    g[label] -= 1.0;
    Ok(g)
}

/// Inverted-dropout mask: kept units carry `1/keep_prob`, dropped units 0.
/// At inference no mask is applied at all.
pub fn dropout_mask<R: Rng>(dim: usize, keep_prob: f64, rng: &mut R) -> Vec<f64> {
    debug_assert!(keep_prob > 0.0 && keep_prob <= 1.0);
    if keep_prob >= 1.0 {
        return vec![1.0; dim];
    }
    let scale = 1.0 / keep_prob;
    (0..dim)
        .map(|_| if rng.random::<f64>() < keep_prob { scale } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
    }

    /// Central finite difference of `f` with respect to `x[i]`.
    fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &mut Vec<f64>, i: usize, eps: f64) -> f64 {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(x);
        x[i] = orig - eps;
        let down = f(x);
        x[i] = orig;
        (up - down) / (2.0 * eps)
    }

    fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    #[test]
    fn conv_hand_example() {
        let input = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let kernel = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = conv1d_forward(&input, &[kernel], &[0.0]).unwrap();
        assert_eq!(out.row(0), &[6.0, 8.0]);
    }

    #[test]
    fn conv_zero_kernels_zero_output() {
        let input = Tensor2::from_rows(&[vec![1.0, -2.0, 3.0, 4.0]]);
        let kernels = vec![Tensor2::zeros(1, 2); 3];
        let out = conv1d_forward(&input, &kernels, &[0.0; 3]).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_output_length() {
        let input = Tensor2::zeros(26, 748);
        let kernels = vec![Tensor2::zeros(26, 10)];
        let out = conv1d_forward(&input, &kernels, &[0.0]).unwrap();
        assert_eq!(out.cols(), 739);
    }

    #[test]
    fn conv_rejects_short_input() {
        let input = Tensor2::zeros(2, 3);
        let kernels = vec![Tensor2::zeros(2, 5)];
        assert!(conv1d_forward(&input, &kernels, &[0.0]).is_err());
    }

    #[test]
    fn conv_backward_zero_grad() {
        let input = Tensor2::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let kernels = vec![Tensor2::from_rows(&[vec![0.5, -0.5]])];
        let out = conv1d_forward(&input, &kernels, &[0.1]).unwrap();
        let grad_out = Tensor2::zeros(1, 2);
        let (gk, gb, gx) = conv1d_backward(&grad_out, &input, &kernels, &out).unwrap();
        assert!(gk[0].as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(gb, vec![0.0]);
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_single_step_equals_input_patch() {
        // T == w: one output step; active ReLU makes grad_kernel the input itself.
        let input = Tensor2::from_rows(&[vec![0.3, -0.7], vec![1.5, 0.2]]);
        let kernels = vec![Tensor2::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.1]])];
        let out = conv1d_forward(&input, &kernels, &[5.0]).unwrap();
        assert!(out.get(0, 0) > 0.0);
        let mut grad_out = Tensor2::zeros(1, 1);
        grad_out.set(0, 0, 2.0);
        let (gk, gb, _) = conv1d_backward(&grad_out, &input, &kernels, &out).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                assert!((gk[0].get(r, c) - 2.0 * input.get(r, c)).abs() < 1e-12);
            }
        }
        assert!((gb[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (bands, t_len, width, n_k) = (3, 8, 3, 2);
        let input = Tensor2::from_vec(bands, t_len, randn_vec(&mut rng, bands * t_len)).unwrap();
        let kernels: Vec<Tensor2> = (0..n_k)
            .map(|_| Tensor2::from_vec(bands, width, randn_vec(&mut rng, bands * width)).unwrap())
            .collect();
        let biases = randn_vec(&mut rng, n_k);
        let out_len = t_len - width + 1;
        // Loss = weighted sum of outputs so the backward sees a dense gradient.
        let weights = randn_vec(&mut rng, n_k * out_len);
        let grad_out = Tensor2::from_vec(n_k, out_len, weights.clone()).unwrap();

        let out = conv1d_forward(&input, &kernels, &biases).unwrap();
        let (gk, gb, gx) = conv1d_backward(&grad_out, &input, &kernels, &out).unwrap();

        let loss = |inp: &Tensor2, ks: &[Tensor2], bs: &[f64]| -> f64 {
            let o = conv1d_forward(inp, ks, bs).unwrap();
            o.as_slice().iter().zip(&weights).map(|(&v, &w)| v * w).sum()
        };

        let eps = 1e-6;
        for k in 0..n_k {
            for idx in 0..bands * width {
                let mut f = |v: &[f64]| -> f64 {
                    let mut ks = kernels.clone();
                    ks[k] = Tensor2::from_vec(bands, width, v.to_vec()).unwrap();
                    loss(&input, &ks, &biases)
                };
                let mut flat = kernels[k].as_slice().to_vec();
                let num = central_diff(&mut f, &mut flat, idx, eps);
                assert!(rel_err(num, gk[k].as_slice()[idx]) < 1e-5);
            }
            let mut f = |v: &[f64]| loss(&input, &kernels, v);
            let mut bs = biases.clone();
            let num = central_diff(&mut f, &mut bs, k, eps);
            assert!(rel_err(num, gb[k]) < 1e-5);
        }
        for idx in 0..bands * t_len {
            let mut f = |v: &[f64]| -> f64 {
                let inp = Tensor2::from_vec(bands, t_len, v.to_vec()).unwrap();
                loss(&inp, &kernels, &biases)
            };
            let mut flat = input.as_slice().to_vec();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, gx.as_slice()[idx]) < 1e-5);
        }
    }

    #[test]
    fn pool_hand_example() {
        let maps = Tensor2::from_rows(&[vec![1.0, 3.0, 2.0, 0.0]]);
        let (pooled, argmax) = maxpool_forward(&maps, 2, 2).unwrap();
        assert_eq!(pooled.row(0), &[3.0, 2.0]);
        assert_eq!(argmax[0], vec![1, 2]);
    }

    #[test]
    fn pool_constant_map() {
        let maps = Tensor2::from_vec(2, 10, vec![4.5; 20]).unwrap();
        let (pooled, argmax) = maxpool_forward(&maps, 3, 3).unwrap();
        assert!(pooled.as_slice().iter().all(|&v| v == 4.5));
        // Ties break to the lowest index: every window's first position.
        assert_eq!(argmax[0], vec![0, 3, 6]);
    }

    #[test]
    fn pool_output_count() {
        let maps = Tensor2::zeros(1, 739);
        let (pooled, _) = maxpool_forward(&maps, 30, 30).unwrap();
        assert_eq!(pooled.cols(), 24);
    }

    #[test]
    fn pool_backward_routing_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let maps = Tensor2::from_vec(2, 9, randn_vec(&mut rng, 18)).unwrap();
        let (pooled, argmax) = maxpool_forward(&maps, 3, 2).unwrap();
        let weights = randn_vec(&mut rng, pooled.rows() * pooled.cols());
        let grad_out = Tensor2::from_vec(pooled.rows(), pooled.cols(), weights.clone()).unwrap();
        let grad = maxpool_backward(&grad_out, &argmax, maps.cols()).unwrap();

        let eps = 1e-6;
        for idx in 0..18 {
            let mut f = |v: &[f64]| -> f64 {
                let m = Tensor2::from_vec(2, 9, v.to_vec()).unwrap();
                let (p, _) = maxpool_forward(&m, 3, 2).unwrap();
                p.as_slice().iter().zip(&weights).map(|(&a, &b)| a * b).sum()
            };
            let mut flat = maps.as_slice().to_vec();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, grad.as_slice()[idx]) < 1e-5);
        }
    }

    #[test]
    fn pool_backward_non_overlapping_single_contribution() {
        let maps = Tensor2::from_rows(&[vec![1.0, 5.0, 2.0, 7.0, 0.0, 3.0]]);
        let (_, argmax) = maxpool_forward(&maps, 2, 3).unwrap();
        let grad_out = Tensor2::from_rows(&[vec![1.0, 1.0]]);
        let grad = maxpool_backward(&grad_out, &argmax, 6).unwrap();
        assert!(grad.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        assert_eq!(grad.as_slice().iter().filter(|&&v| v == 1.0).count(), 2);
    }

    #[test]
    fn attention_equal_inputs_uniform() {
        let x = Tensor2::from_rows(&[vec![0.4; 5], vec![-1.2; 5]]);
        let (alpha, attentive) = attention_forward(&x, &[0.7, -0.3]).unwrap();
        for &a in &alpha {
            assert!((a - 0.2).abs() < 1e-12);
        }
        assert!((attentive[0] - 0.4).abs() < 1e-12);
        assert!((attentive[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn attention_softmax_by_hand() {
        // scores (0, ln 3) -> alpha (0.25, 0.75)
        let x = Tensor2::from_rows(&[vec![0.0, 3.0_f64.ln()]]);
        let (alpha, _) = attention_forward(&x, &[1.0]).unwrap();
        assert!((alpha[0] - 0.25).abs() < 1e-12);
        assert!((alpha[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn attention_zero_w_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor2::from_vec(4, 6, randn_vec(&mut rng, 24)).unwrap();
        let (alpha, _) = attention_forward(&x, &[0.0; 4]).unwrap();
        for &a in &alpha {
            assert!((a - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_empty_sequence_rejected() {
        let x = Tensor2::zeros(3, 0);
        assert!(matches!(
            attention_forward(&x, &[0.0; 3]),
            Err(NumericError::EmptySequence)
        ));
    }

    #[test]
    fn attention_weights_sum_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..100 {
            let x = Tensor2::from_vec(3, 7, randn_vec(&mut rng, 21)).unwrap();
            let w = randn_vec(&mut rng, 3);
            let (alpha, _) = attention_forward(&x, &w).unwrap();
            let sum: f64 = alpha.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        }
        // Explicit shift: softmax(s) == softmax(s + c)
        let s = vec![0.3, -1.1, 2.0, 0.0];
        let shifted: Vec<f64> = s.iter().map(|v| v + 123.456).collect();
        let a = stable_softmax(&s);
        let b = stable_softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_stable_for_huge_scores() {
        let x = Tensor2::from_rows(&[vec![1e4, -1e4, 0.0]]);
        let (alpha, attentive) = attention_forward(&x, &[1.0]).unwrap();
        assert!(alpha.iter().all(|a| a.is_finite()));
        assert!(attentive.iter().all(|a| a.is_finite()));
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attention_backward_zero_grad() {
        let x = Tensor2::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let w = [0.5, -0.5];
        let (alpha, _) = attention_forward(&x, &w).unwrap();
        let (gx, gw) = attention_backward(&x, &w, &alpha, None, &[0.0, 0.0]).unwrap();
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
        assert!(gw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_backward_single_step_w_gradient_vanishes() {
        // Tp = 1: alpha is identically 1, so W gets no gradient.
        let x = Tensor2::from_rows(&[vec![2.0], vec![-1.0]]);
        let w = [0.3, 0.9];
        let (alpha, _) = attention_forward(&x, &w).unwrap();
        let (_, gw) = attention_backward(&x, &w, &alpha, None, &[1.0, -2.0]).unwrap();
        assert!(gw.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn attention_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (dim, steps) = (3, 5);
        let x = Tensor2::from_vec(dim, steps, randn_vec(&mut rng, dim * steps)).unwrap();
        let w = randn_vec(&mut rng, dim);
        let out_weights = randn_vec(&mut rng, dim);
        let alpha_weights = randn_vec(&mut rng, steps);

        let loss = |xv: &Tensor2, wv: &[f64]| -> f64 {
            let (alpha, att) = attention_forward(xv, wv).unwrap();
            let l1: f64 = att.iter().zip(&out_weights).map(|(&a, &b)| a * b).sum();
            let l2: f64 = alpha.iter().zip(&alpha_weights).map(|(&a, &b)| a * b).sum();
            l1 + l2
        };

        let (alpha, _) = attention_forward(&x, &w).unwrap();
        let (gx, gw) =
            attention_backward(&x, &w, &alpha, Some(&alpha_weights), &out_weights).unwrap();

        let eps = 1e-6;
        for idx in 0..dim * steps {
            let mut f = |v: &[f64]| {
                loss(&Tensor2::from_vec(dim, steps, v.to_vec()).unwrap(), &w)
            };
            let mut flat = x.as_slice().to_vec();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, gx.as_slice()[idx]) < 1e-5);
        }
        for idx in 0..dim {
            let mut f = |v: &[f64]| loss(&x, v);
            let mut wv = w.clone();
            let num = central_diff(&mut f, &mut wv, idx, eps);
            assert!(rel_err(num, gw[idx]) < 1e-5);
        }
    }

    #[test]
    fn dense_zero_params_gives_half_half() {
        let h = vec![1.0, -2.0, 3.0];
        let probs = dense_softmax_forward(&h, &Tensor2::zeros(2, 3), &[0.0, 0.0]).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert!((probs[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dense_softmax_by_hand_and_shift_invariance() {
        // logits (0, ln 3) via bias only -> (0.25, 0.75)
        let h = vec![0.0];
        let wd = Tensor2::zeros(2, 1);
        let p = dense_softmax_forward(&h, &wd, &[0.0, 3.0_f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
        let shifted = dense_softmax_forward(&h, &wd, &[5.0, 5.0 + 3.0_f64.ln()]).unwrap();
        assert!((shifted[0] - p[0]).abs() < 1e-12);
        assert!((shifted[1] - p[1]).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_values() {
        assert!(cross_entropy(&[1.0, 0.0], 0).unwrap().abs() < 1e-12);
        let l = cross_entropy(&[0.5, 0.5], 1).unwrap();
        assert!((l - 2.0_f64.ln()).abs() < 1e-12);
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(NumericError::InvalidLabel(2))
        ));
    }

    #[test]
    fn softmax_cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for label in 0..2 {
            let logits = randn_vec(&mut rng, 2);
            let loss = |z: &[f64]| -> f64 {
                let p = stable_softmax(z);
                cross_entropy(&[p[0], p[1]], label).unwrap()
            };
            let p = stable_softmax(&logits);
            let g = cross_entropy_grad_logits(&[p[0], p[1]], label).unwrap();
            let mut z = logits.clone();
            for i in 0..2 {
                let mut f = |v: &[f64]| loss(v);
                let num = central_diff(&mut f, &mut z, i, 1e-6);
                assert!(rel_err(num, g[i]) < 1e-6);
            }
        }
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = randn_vec(&mut rng, 4);
        let wd = Tensor2::from_vec(2, 4, randn_vec(&mut rng, 8)).unwrap();
        let bd = randn_vec(&mut rng, 2);
        let label = 1;

        let loss = |hv: &[f64], wv: &Tensor2, bv: &[f64]| -> f64 {
            let p = dense_softmax_forward(hv, wv, bv).unwrap();
            cross_entropy(&p, label).unwrap()
        };

        let p = dense_softmax_forward(&h, &wd, &bd).unwrap();
        let gl = cross_entropy_grad_logits(&p, label).unwrap();
        let (gwd, gbd, gh) = dense_backward(&h, &wd, &gl).unwrap();

        let eps = 1e-6;
        for idx in 0..8 {
            let mut f =
                |v: &[f64]| loss(&h, &Tensor2::from_vec(2, 4, v.to_vec()).unwrap(), &bd);
            let mut flat = wd.as_slice().to_vec();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, gwd.as_slice()[idx]) < 1e-6);
        }
        for idx in 0..2 {
            let mut f = |v: &[f64]| loss(&h, &wd, v);
            let mut flat = bd.clone();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, gbd[idx]) < 1e-6);
        }
        for idx in 0..4 {
            let mut f = |v: &[f64]| loss(v, &wd, &bd);
            let mut flat = h.clone();
            let num = central_diff(&mut f, &mut flat, idx, eps);
            assert!(rel_err(num, gh[idx]) < 1e-6);
        }
    }

    #[test]
    fn dropout_mask_keeps_everything_at_prob_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mask = dropout_mask(100, 1.0, &mut rng);
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn dropout_mask_values_and_determinism() {
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let ma = dropout_mask(1000, 0.5, &mut a);
        let mb = dropout_mask(1000, 0.5, &mut b);
        assert_eq!(ma, mb);
        assert!(ma.iter().all(|&m| m == 0.0 || m == 2.0));
        let kept = ma.iter().filter(|&&m| m > 0.0).count();
        assert!(kept > 400 && kept < 600);
    }
}
