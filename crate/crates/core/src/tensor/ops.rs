//! Parameter-free operations and their backward passes.
//!
//! Spatial tensors are `C×H×W`; vectors are rank 1. Backward functions take
//! whatever forward quantity they need (input or output) plus the gradient
//! of the loss with respect to the forward output.

use super::Tensor;
use crate::{Error, Result};

pub fn relu(x: &Tensor) -> Tensor {
    map(x, |v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation input.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    zip(input, grad_out, "relu backward", |x, g| if x > 0.0 { g } else { 0.0 })
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    map(x, sigmoid_scalar)
}

/// Gradient through the sigmoid given its output.
pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    zip(output, grad_out, "sigmoid backward", |y, g| g * y * (1.0 - y))
}

/// Softmax over every element of `x` (for a single-channel map this is the
/// softmax over spatial positions). The output keeps `x`'s shape.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::Shape("softmax of an empty tensor".into()));
    }
    let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.data().iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Tensor::from_vec(x.shape(), exps.into_iter().map(|e| e / sum).collect())
}

/// Gradient through softmax given its output: `y ⊙ (g − Σ y·g)`.
pub fn softmax_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    check_same(output, grad_out, "softmax backward")?;
    let dot: f64 = output.data().iter().zip(grad_out.data()).map(|(y, g)| y * g).sum();
    zip(output, grad_out, "softmax backward", |y, g| y * (g - dot))
}

fn spatial_dims(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    x.expect_rank(3, what)?;
    Ok((x.dim(0), x.dim(1), x.dim(2)))
}

/// Per-channel spatial mean of a `C×H×W` tensor.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let (c, h, w) = spatial_dims(x, "global_avg_pool")?;
    let n = (h * w) as f64;
    Ok(Tensor::vector(
        x.data().chunks_exact(h * w).take(c).map(|ch| ch.iter().sum::<f64>() / n).collect(),
    ))
}

pub fn global_avg_pool_backward(grad_out: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    grad_out.expect_rank(1, "global_avg_pool backward")?;
    let c = grad_out.dim(0);
    let n = (h * w) as f64;
    let mut out = Tensor::zeros(&[c, h, w]);
    for (ch, &g) in out.data_mut().chunks_exact_mut(h * w).zip(grad_out.data()) {
        ch.fill(g / n);
    }
    Ok(out)
}

/// Non-overlapping `factor`×`factor` average pooling. Spatial dims must be
/// divisible by `factor`.
pub fn avg_pool(x: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = spatial_dims(x, "avg_pool")?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::Shape(format!("avg_pool factor {factor} does not divide {h}x{w}")));
    }
    let (oh, ow) = (h / factor, w / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let src = x.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let orow = (ch * oh + y / factor) * ow;
            let irow = (ch * h + y) * w;
            for xx in 0..w {
                dst[orow + xx / factor] += src[irow + xx];
            }
        }
    }
    for v in dst.iter_mut() {
        *v *= norm;
    }
    Ok(out)
}

pub fn avg_pool_backward(grad_out: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, oh, ow) = spatial_dims(grad_out, "avg_pool backward")?;
    let (h, w) = (oh * factor, ow * factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = Tensor::zeros(&[c, h, w]);
    let g = grad_out.data();
    let dst = out.data_mut();
    for ch in 0..c {
        for y in 0..h {
            let orow = (ch * oh + y / factor) * ow;
            let irow = (ch * h + y) * w;
            for xx in 0..w {
                dst[irow + xx] = g[orow + xx / factor] * norm;
            }
        }
    }
    Ok(out)
}

/// Scales channel `c` of a `C×H×W` tensor by `weights[c]`.
pub fn channel_mul(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (c, h, w) = spatial_dims(x, "channel_mul")?;
    weights.expect_shape(&[c], "channel_mul weights")?;
    let mut out = x.clone();
    for (ch, &s) in out.data_mut().chunks_exact_mut(h * w).zip(weights.data()) {
        for v in ch {
            *v *= s;
        }
    }
    Ok(out)
}

/// Returns `(d input, d weights)`.
pub fn channel_mul_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    check_same(x, grad_out, "channel_mul backward")?;
    let (_, h, w) = spatial_dims(x, "channel_mul backward")?;
    let gx = channel_mul(grad_out, weights)?;
    let gw = x
        .data()
        .chunks_exact(h * w)
        .zip(grad_out.data().chunks_exact(h * w))
        .map(|(xc, gc)| xc.iter().zip(gc).map(|(a, b)| a * b).sum())
        .collect();
    Ok((gx, Tensor::vector(gw)))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip(a, b, "add", |x, y| x + y)
}

/// Concatenates `C_i×H×W` tensors along the channel axis.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| Error::Shape("concat of nothing".into()))?;
    let (_, h, w) = spatial_dims(first, "concat")?;
    let mut channels = 0;
    let mut data = Vec::new();
    for p in parts {
        let (c, ph, pw) = spatial_dims(p, "concat")?;
        if (ph, pw) != (h, w) {
            return Err(Error::Shape(format!("concat: {ph}x{pw} part among {h}x{w}")));
        }
        channels += c;
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[channels, h, w], data)
}

/// Splits a channel-concatenated gradient back into parts of the given widths.
pub fn split_channels(grad: &Tensor, channels: &[usize]) -> Result<Vec<Tensor>> {
    let (c, h, w) = spatial_dims(grad, "split")?;
    if channels.iter().sum::<usize>() != c {
        return Err(Error::Shape(format!("split {channels:?} of {c} channels")));
    }
    let mut out = Vec::with_capacity(channels.len());
    let mut start = 0;
    for &n in channels {
        let end = start + n * h * w;
        out.push(Tensor::from_vec(&[n, h, w], grad.data()[start..end].to_vec())?);
        start = end;
    }
    Ok(out)
}

/// `out[c] = Σ_p x[c, p] · weights[p]` for a `C×H×W` input and an `H×W` (or
/// `1×H×W`) weight map.
pub fn spatial_weighted_sum(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (_, h, w) = spatial_dims(x, "spatial_weighted_sum")?;
    if weights.len() != h * w {
        return Err(Error::Shape(format!(
            "spatial weights {:?} for a {h}x{w} map",
            weights.shape()
        )));
    }
    Ok(Tensor::vector(
        x.data()
            .chunks_exact(h * w)
            .map(|ch| ch.iter().zip(weights.data()).map(|(a, b)| a * b).sum())
            .collect(),
    ))
}

/// Returns `(d input, d weights)`; the weight gradient has the weights' shape.
pub fn spatial_weighted_sum_backward(x: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let (c, h, w) = spatial_dims(x, "spatial_weighted_sum backward")?;
    grad_out.expect_shape(&[c], "spatial_weighted_sum grad")?;
    let n = h * w;
    let mut gx = Tensor::zeros(&[c, h, w]);
    for (ch, &g) in gx.data_mut().chunks_exact_mut(n).zip(grad_out.data()) {
        for (v, &wt) in ch.iter_mut().zip(weights.data()) {
            *v = g * wt;
        }
    }
    let mut gw = vec![0.0; n];
    for (ch, &g) in x.data().chunks_exact(n).zip(grad_out.data()) {
        for (acc, &xv) in gw.iter_mut().zip(ch) {
            *acc += g * xv;
        }
    }
    Ok((gx, Tensor::from_vec(weights.shape(), gw)?))
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_vec(x.shape(), x.data().iter().map(|&v| f(v)).collect()).expect("same length")
}

fn check_same(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip(a: &Tensor, b: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    check_same(a, b, what)?;
    Tensor::from_vec(a.shape(), a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}
