//! 1-D layer kernels with hand-written backward passes.
//!
//! Activations are `[channels, length]` tensors. Convolutions use odd kernels
//! with zero "same" padding.

use super::activation::{h_sigmoid, h_sigmoid_grad, relu, relu_grad};
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn odd_kernel(k: usize) -> Result<usize> {
    if k.is_multiple_of(2) {
        return Err(Error::shape(format!("kernel size {k} must be odd")));
    }
    Ok(k / 2)
}

#[inline]
fn tap(x: &[f64], l: usize, t: usize, pad: usize) -> Option<usize> {
    let p = (l + t).checked_sub(pad)?;
    (p < x.len()).then_some(p)
}

/// Standard convolution; `w` is `[out, in, k]`, `b` is `[out]`.
pub fn conv1d(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (cin, len) = x.dims2()?;
    let (cout, wcin, k) = w.dims3()?;
    if wcin != cin {
        return Err(Error::shape(format!("conv expects {wcin} input channels, got {cin}")));
    }
    if let Some(b) = b {
        if b.shape != [cout] {
            return Err(Error::shape(format!("conv bias shape {:?} != [{cout}]", b.shape)));
        }
    }
    let pad = odd_kernel(k)?;
    let mut y = Tensor::zeros(&[cout, len]);
    for o in 0..cout {
        let bias = b.map_or(0.0, |b| b.data[o]);
        for l in 0..len {
            let mut acc = bias;
            for c in 0..cin {
                let xc = &x.data[c * len..(c + 1) * len];
                for t in 0..k {
                    if let Some(p) = tap(xc, l, t, pad) {
                        acc += w.data[(o * cin + c) * k + t] * xc[p];
                    }
                }
            }
            y.data[o * len + l] = acc;
        }
    }
    Ok(y)
}

/// Returns `(dx, dw, db)`.
pub fn conv1d_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (cin, len) = (x.shape[0], x.shape[1]);
    let (cout, k) = (w.shape[0], w.shape[2]);
    let pad = k / 2;
    let mut dx = Tensor::zeros_like(x);
    let mut dw = Tensor::zeros_like(w);
    let mut db = Tensor::zeros(&[cout]);
    for o in 0..cout {
        for l in 0..len {
            let g = dy.data[o * len + l];
            db.data[o] += g;
            for c in 0..cin {
                for t in 0..k {
                    if let Some(p) = (l + t).checked_sub(pad).filter(|&p| p < len) {
                        dw.data[(o * cin + c) * k + t] += g * x.data[c * len + p];
                        dx.data[c * len + p] += g * w.data[(o * cin + c) * k + t];
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Per-channel convolution; `w` is `[channels, k]`.
pub fn depthwise_conv1d(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (c, len) = x.dims2()?;
    let (wc, k) = w.dims2()?;
    if wc != c {
        return Err(Error::shape(format!("depthwise kernel has {wc} channels, input {c}")));
    }
    let pad = odd_kernel(k)?;
    let mut y = Tensor::zeros(&[c, len]);
    for ch in 0..c {
        let xc = &x.data[ch * len..(ch + 1) * len];
        for l in 0..len {
            let mut acc = 0.0;
            for t in 0..k {
                if let Some(p) = tap(xc, l, t, pad) {
                    acc += w.data[ch * k + t] * xc[p];
                }
            }
            y.data[ch * len + l] = acc;
        }
    }
    Ok(y)
}

/// Returns `(dx, dw)`.
pub fn depthwise_conv1d_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor) {
    let (c, len) = (x.shape[0], x.shape[1]);
    let k = w.shape[1];
    let pad = k / 2;
    let mut dx = Tensor::zeros_like(x);
    let mut dw = Tensor::zeros_like(w);
    for ch in 0..c {
        for l in 0..len {
            let g = dy.data[ch * len + l];
            for t in 0..k {
                if let Some(p) = (l + t).checked_sub(pad).filter(|&p| p < len) {
                    dw.data[ch * k + t] += g * x.data[ch * len + p];
                    dx.data[ch * len + p] += g * w.data[ch * k + t];
                }
            }
        }
    }
    (dx, dw)
}

/// 1×1 cross-channel projection; `w` is `[out, in]`.
pub fn pointwise_conv1d(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (cin, len) = x.dims2()?;
    let (cout, wcin) = w.dims2()?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "pointwise kernel expects {wcin} channels, got {cin}"
        )));
    }
    let mut y = Tensor::zeros(&[cout, len]);
    for o in 0..cout {
        let out = &mut y.data[o * len..(o + 1) * len];
        for c in 0..cin {
            let wv = w.data[o * cin + c];
            for (acc, xv) in out.iter_mut().zip(&x.data[c * len..(c + 1) * len]) {
                *acc += wv * xv;
            }
        }
    }
    Ok(y)
}

/// Returns `(dx, dw)`.
pub fn pointwise_conv1d_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor) {
    let (cin, len) = (x.shape[0], x.shape[1]);
    let cout = w.shape[0];
    let mut dx = Tensor::zeros_like(x);
    let mut dw = Tensor::zeros_like(w);
    for o in 0..cout {
        let g = &dy.data[o * len..(o + 1) * len];
        for c in 0..cin {
            let xc = &x.data[c * len..(c + 1) * len];
            dw.data[o * cin + c] = g.iter().zip(xc).map(|(a, b)| a * b).sum();
            let wv = w.data[o * cin + c];
            for (d, gv) in dx.data[c * len..(c + 1) * len].iter_mut().zip(g) {
                *d += wv * gv;
            }
        }
    }
    (dx, dw)
}

/// Depthwise followed by pointwise convolution.
pub fn depthwise_separable_conv(x: &Tensor, depthwise: &Tensor, pointwise: &Tensor) -> Result<Tensor> {
    pointwise_conv1d(&depthwise_conv1d(x, depthwise)?, pointwise)
}

/// `C·k + C·C′` weights, against `C·C′·k` for a standard convolution.
pub fn separable_param_count(channels: usize, out_channels: usize, k: usize) -> usize {
    channels * k + channels * out_channels
}

/// Squeeze-and-excitation weights: `fc1` is `[reduced, C]`, `fc2` is `[C, reduced]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeWeights<'a> {
    pub fc1_w: &'a Tensor,
    pub fc1_b: &'a Tensor,
    pub fc2_w: &'a Tensor,
    pub fc2_b: &'a Tensor,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SeCache {
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub gate_pre: Vec<f64>,
    pub scale: Vec<f64>,
}

fn dense_vec(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    (0..rows)
        .map(|r| {
            b.data[r]
                + w.data[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        })
        .collect()
}

impl SeWeights<'_> {
    fn check(&self, c: usize) -> Result<usize> {
        let (r, c1) = self.fc1_w.dims2()?;
        let (c2, r2) = self.fc2_w.dims2()?;
        if c1 != c || c2 != c || r2 != r || self.fc1_b.shape != [r] || self.fc2_b.shape != [c] {
            return Err(Error::shape(format!(
                "SE weights fc1 {:?}/{:?}, fc2 {:?}/{:?} do not fit {c} channels",
                self.fc1_w.shape, self.fc1_b.shape, self.fc2_w.shape, self.fc2_b.shape
            )));
        }
        if r == 0 || r > c {
            return Err(Error::shape(format!("SE bottleneck {r} must lie in 1..={c}")));
        }
        Ok(r)
    }
}

/// `s = h_sigmoid(fc2(relu(fc1(gap(x)))))`, `y[c] = x[c] · s[c]`.
pub fn se_block(x: &Tensor, se: &SeWeights) -> Result<(Tensor, SeCache)> {
    let (c, len) = x.dims2()?;
    se.check(c)?;
    let pooled: Vec<f64> = x
        .data
        .chunks_exact(len)
        .map(|ch| ch.iter().sum::<f64>() / len as f64)
        .collect();
    let hidden_pre = dense_vec(se.fc1_w, se.fc1_b, &pooled);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| relu(v)).collect();
    let gate_pre = dense_vec(se.fc2_w, se.fc2_b, &hidden);
    let scale: Vec<f64> = gate_pre.iter().map(|&v| h_sigmoid(v)).collect();
    let mut y = x.clone();
    for (ch, s) in y.data.chunks_exact_mut(len).zip(&scale) {
        ch.iter_mut().for_each(|v| *v *= s);
    }
    Ok((
        y,
        SeCache {
            pooled,
            hidden_pre,
            hidden,
            gate_pre,
            scale,
        },
    ))
}

/// Gradients of an SE block: `(dx, d_fc1_w, d_fc1_b, d_fc2_w, d_fc2_b)`.
pub fn se_block_backward(
    x: &Tensor,
    se: &SeWeights,
    cache: &SeCache,
    dy: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor, Tensor) {
    let (c, len) = (x.shape[0], x.shape[1]);
    let r = se.fc1_w.shape[0];
    let mut dx = Tensor::zeros_like(x);
    let mut dscale = vec![0.0; c];
    for ch in 0..c {
        let xs = &x.data[ch * len..(ch + 1) * len];
        let gs = &dy.data[ch * len..(ch + 1) * len];
        dscale[ch] = xs.iter().zip(gs).map(|(a, b)| a * b).sum();
        for (d, g) in dx.data[ch * len..(ch + 1) * len].iter_mut().zip(gs) {
            *d = g * cache.scale[ch];
        }
    }
    let dgate: Vec<f64> = dscale
        .iter()
        .zip(&cache.gate_pre)
        .map(|(d, z)| d * h_sigmoid_grad(*z))
        .collect();
    let mut dfc2_w = Tensor::zeros(&[c, r]);
    let mut dhidden = vec![0.0; r];
    for ch in 0..c {
        for h in 0..r {
            dfc2_w.data[ch * r + h] = dgate[ch] * cache.hidden[h];
            dhidden[h] += se.fc2_w.data[ch * r + h] * dgate[ch];
        }
    }
    let dfc2_b = Tensor {
        shape: vec![c],
        data: dgate,
    };
    let dhidden_pre: Vec<f64> = dhidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(d, z)| d * relu_grad(*z))
        .collect();
    let mut dfc1_w = Tensor::zeros(&[r, c]);
    let mut dpooled = vec![0.0; c];
    for h in 0..r {
        for ch in 0..c {
            dfc1_w.data[h * c + ch] = dhidden_pre[h] * cache.pooled[ch];
            dpooled[ch] += se.fc1_w.data[h * c + ch] * dhidden_pre[h];
        }
    }
    let dfc1_b = Tensor {
        shape: vec![r],
        data: dhidden_pre,
    };
    for ch in 0..c {
        let g = dpooled[ch] / len as f64;
        dx.data[ch * len..(ch + 1) * len].iter_mut().for_each(|d| *d += g);
    }
    (dx, dfc1_w, dfc1_b, dfc2_w, dfc2_b)
}

/// `w · x + b` with `w` as `[out, in]`.
pub fn dense(x: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let (out, inp) = w.dims2()?;
    if inp != x.len() || b.shape != [out] {
        return Err(Error::shape(format!(
            "dense {:?}+{:?} cannot take {} inputs",
            w.shape,
            b.shape,
            x.len()
        )));
    }
    Ok(dense_vec(w, b, x))
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(x: &[f64], w: &Tensor, dy: &[f64]) -> (Vec<f64>, Tensor, Tensor) {
    let (out, inp) = (w.shape[0], w.shape[1]);
    let mut dx = vec![0.0; inp];
    let mut dw = Tensor::zeros(&[out, inp]);
    for o in 0..out {
        for i in 0..inp {
            dw.data[o * inp + i] = dy[o] * x[i];
            dx[i] += w.data[o * inp + i] * dy[o];
        }
    }
    (
        dx,
        dw,
        Tensor {
            shape: vec![out],
            data: dy.to_vec(),
        },
    )
}

/// Softmax with max-logit subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Floor on the true-class probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−ln(max(probs[label], 1e-12))`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} outside {} classes", probs.len())))?;
    Ok(-p.max(PROB_FLOOR).ln())
}
