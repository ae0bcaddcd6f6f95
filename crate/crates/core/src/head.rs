//! Temporal contrast features, the 1-D boundary classifier, soft targets,
//! the loss, and peak picking of boundary timestamps.

use serde::{Deserialize, Serialize};

use crate::tensor::ops::{relu, relu_backward, sigmoid_scalar};
use crate::tensor::{Conv1d, GradBuffer, Initializer, ParamId, ParamSet, Tensor};
use crate::{Error, Result};

/// Depthwise contrast windows plus the classifier.
#[derive(Debug, Clone)]
pub struct BoundaryHead {
    /// `k×C` weights applied to `ṽ^{l-1..l-k}`; `None` when `k = 0`.
    pub left: Option<ParamId>,
    /// `k×C` weights applied to `ṽ^{l+1..l+k}`.
    pub right: Option<ParamId>,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub channels: usize,
    pub window: usize,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    features: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl BoundaryHead {
    pub fn new(params: &mut ParamSet, init: &mut Initializer, channels: usize, window: usize) -> Result<Self> {
        let (left, right) = if window > 0 {
            (
                Some(params.add("head.left", init.fan_in_uniform(&[window, channels], window))?),
                Some(params.add("head.right", init.fan_in_uniform(&[window, channels], window))?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            left,
            right,
            conv1: Conv1d::new(params, init, "head.conv1", 2 * channels, channels, 3)?,
            conv2: Conv1d::new(params, init, "head.conv2", channels, 1, 1)?,
            channels,
            window,
        })
    }

    pub fn contrast(&self, params: &ParamSet, seq: &Tensor) -> Result<Tensor> {
        match (self.left, self.right) {
            (Some(l), Some(r)) => contrast_features(seq, params.value(l), params.value(r)),
            _ => contrast_features(seq, &Tensor::zeros(&[0, self.channels]), &Tensor::zeros(&[0, self.channels])),
        }
    }

    /// Boundary logits (`1×L`) for an embedding sequence (`C×L`).
    pub fn logits(&self, params: &ParamSet, seq: &Tensor) -> Result<Tensor> {
        Ok(self.logits_cached(params, seq)?.0)
    }

    pub fn logits_cached(&self, params: &ParamSet, seq: &Tensor) -> Result<(Tensor, HeadCache)> {
        seq.expect_rank(2, "embedding sequence")?;
        if seq.dim(0) != self.channels || seq.dim(1) == 0 {
            return Err(Error::Shape(format!(
                "head expects a non-empty {}×L sequence, got {:?}",
                self.channels,
                seq.shape()
            )));
        }
        let features = self.contrast(params, seq)?;
        let pre = self.conv1.forward(params, &features)?;
        let hidden = relu(&pre);
        let logits = self.conv2.forward(params, &hidden)?;
        Ok((logits, HeadCache { features, pre, hidden }))
    }

    /// Scores in (0, 1), one per sequence position.
    pub fn scores(&self, params: &ParamSet, seq: &Tensor) -> Result<Vec<f64>> {
        Ok(self.logits(params, seq)?.data().iter().map(|&z| sigmoid_scalar(z)).collect())
    }

    /// Returns the gradient with respect to the embedding sequence.
    pub fn backward(
        &self,
        params: &ParamSet,
        seq: &Tensor,
        cache: &HeadCache,
        grad_logits: &Tensor,
        grads: &mut GradBuffer,
    ) -> Result<Tensor> {
        let g_hidden = self.conv2.backward(params, &cache.hidden, grad_logits, grads)?;
        let g_pre = relu_backward(&cache.pre, &g_hidden)?;
        let g_feat = self.conv1.backward(params, &cache.features, &g_pre, grads)?;
        match (self.left, self.right) {
            (Some(l), Some(r)) => {
                let (g_seq, g_left, g_right) = contrast_backward(seq, params.value(l), params.value(r), &g_feat)?;
                grads.accumulate(l, &g_left)?;
                grads.accumulate(r, &g_right)?;
                Ok(g_seq)
            }
            _ => {
                let (c, len) = (self.channels, seq.dim(1));
                let g = g_feat.data();
                let data = (0..c * len).map(|i| g[i] + g[c * len + i]).collect();
                Tensor::from_vec(&[c, len], data)
            }
        }
    }
}

/// `χ^l = [φ^l; ψ^l]` with `φ^l = Σ_{j=1..k} left_j ⊙ ṽ^{l-j}` and
/// `ψ^l = Σ_{j=1..k} right_j ⊙ ṽ^{l+j}`; positions outside the sequence
/// contribute zero. With `k = 0`, `χ^l = [ṽ^l; ṽ^l]`.
///
/// `seq` is `C×L`; `left` and `right` are `k×C`. Returns `2C×L`.
pub fn contrast_features(seq: &Tensor, left: &Tensor, right: &Tensor) -> Result<Tensor> {
    let (c, len, k) = contrast_dims(seq, left, right)?;
    let v = seq.data();
    let mut out = vec![0.0; 2 * c * len];
    if k == 0 {
        out[..c * len].copy_from_slice(v);
        out[c * len..].copy_from_slice(v);
        return Tensor::from_vec(&[2 * c, len], out);
    }
    let (wl, wr) = (left.data(), right.data());
    for ch in 0..c {
        let row = &v[ch * len..(ch + 1) * len];
        for l in 0..len {
            let mut phi = 0.0;
            let mut psi = 0.0;
            for j in 1..=k {
                if l >= j {
                    phi += wl[(j - 1) * c + ch] * row[l - j];
                }
                if l + j < len {
                    psi += wr[(j - 1) * c + ch] * row[l + j];
                }
            }
            out[ch * len + l] = phi;
            out[(c + ch) * len + l] = psi;
        }
    }
    Tensor::from_vec(&[2 * c, len], out)
}

/// Returns `(d seq, d left, d right)` for `k ≥ 1`.
pub fn contrast_backward(seq: &Tensor, left: &Tensor, right: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, len, k) = contrast_dims(seq, left, right)?;
    grad.expect_shape(&[2 * c, len], "contrast grad")?;
    let (v, wl, wr, g) = (seq.data(), left.data(), right.data(), grad.data());
    let mut gv = vec![0.0; c * len];
    let mut gl = vec![0.0; k * c];
    let mut gr = vec![0.0; k * c];
    for ch in 0..c {
        for l in 0..len {
            let (g_phi, g_psi) = (g[ch * len + l], g[(c + ch) * len + l]);
            for j in 1..=k {
                if l >= j {
                    let s = ch * len + l - j;
                    gv[s] += wl[(j - 1) * c + ch] * g_phi;
                    gl[(j - 1) * c + ch] += v[s] * g_phi;
                }
                if l + j < len {
                    let s = ch * len + l + j;
                    gv[s] += wr[(j - 1) * c + ch] * g_psi;
                    gr[(j - 1) * c + ch] += v[s] * g_psi;
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, len], gv)?,
        Tensor::from_vec(left.shape(), gl)?,
        Tensor::from_vec(right.shape(), gr)?,
    ))
}

fn contrast_dims(seq: &Tensor, left: &Tensor, right: &Tensor) -> Result<(usize, usize, usize)> {
    seq.expect_rank(2, "embedding sequence")?;
    let (c, len) = (seq.dim(0), seq.dim(1));
    left.expect_rank(2, "left contrast weights")?;
    let k = left.dim(0);
    left.expect_shape(&[k, c], "left contrast weights")?;
    right.expect_shape(&[k, c], "right contrast weights")?;
    Ok((c, len, k))
}

/// Gaussian soft targets over `len` positions for boundaries at the given
/// (0-based) positions: `g_i = min(1, Σ_b exp(−(b − i)² / 2α²))`.
pub fn gaussian_soft_labels(positions: &[usize], len: usize, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("soft-label width must be positive, got {alpha}")));
    }
    if let Some(&bad) = positions.iter().find(|&&p| p >= len) {
        return Err(Error::InvalidInput(format!("boundary position {bad} outside a sequence of {len}")));
    }
    let denom = 2.0 * alpha * alpha;
    Ok((0..len)
        .map(|i| {
            let sum: f64 = positions
                .iter()
                .map(|&b| {
                    let d = b as f64 - i as f64;
                    (-d * d / denom).exp()
                })
                .sum();
            sum.min(1.0)
        })
        .collect())
}

/// Mean binary cross-entropy of scores against targets, with its gradient
/// with respect to the scores.
pub fn bce_loss(scores: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(scores.len(), targets.len())?;
    if let Some(s) = scores.iter().find(|&&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::Numeric(format!("score {s} outside (0, 1)")));
    }
    let n = scores.len() as f64;
    let loss = scores
        .iter()
        .zip(targets)
        .map(|(&s, &g)| -(g * s.ln() + (1.0 - g) * (1.0 - s).ln()))
        .sum::<f64>()
        / n;
    let grad = scores.iter().zip(targets).map(|(&s, &g)| (s - g) / (s * (1.0 - s)) / n).collect();
    Ok((loss, grad))
}

/// The same loss evaluated from logits, stable for large `|z|`; the
/// gradient is with respect to the logits: `(σ(z) − g) / L`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_lengths(logits.len(), targets.len())?;
    let n = logits.len() as f64;
    let loss = logits
        .iter()
        .zip(targets)
        .map(|(&z, &g)| z.max(0.0) - g * z + (-z.abs()).exp().ln_1p())
        .sum::<f64>()
        / n;
    let grad = logits.iter().zip(targets).map(|(&z, &g)| (sigmoid_scalar(z) - g) / n).collect();
    Ok((loss, grad))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::Shape(format!("{a} scores against {b} targets")));
    }
    Ok(())
}

/// Positions selected as boundaries: `S^l ≥ threshold` and `S^l` strictly
/// above every earlier score and at least every later score within
/// `radius` positions (so the earliest of a plateau wins).
pub fn pick_positions(scores: &[f64], threshold: f64, radius: usize) -> Vec<usize> {
    (0..scores.len())
        .filter(|&l| {
            let s = scores[l];
            s >= threshold
                && (l.saturating_sub(radius)..l).all(|m| s > scores[m])
                && (l + 1..(l + radius + 1).min(scores.len())).all(|m| s >= scores[m])
        })
        .collect()
}

/// Boundary timestamps in seconds for selected positions.
pub fn pick_boundaries(scores: &[f64], frame_indices: &[usize], fps: f64, threshold: f64, radius: usize) -> Result<Vec<f64>> {
    if scores.len() != frame_indices.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} frame indices",
            scores.len(),
            frame_indices.len()
        )));
    }
    if !(fps > 0.0) {
        return Err(Error::InvalidInput(format!("fps must be positive, got {fps}")));
    }
    Ok(pick_positions(scores, threshold, radius)
        .into_iter()
        .map(|l| frame_indices[l] as f64 / fps)
        .collect())
}

/// Index of the sequence position whose frame is nearest to `frame`.
/// Ties go to the later position, the first retained frame showing the
/// change. `frame` is snapped to an integer when within 1e-6 of one, so
/// timestamps that went through `frame / fps` map back exactly.
pub fn nearest_position(frame_indices: &[usize], frame: f64) -> Option<usize> {
    let frame = if (frame - frame.round()).abs() < 1e-6 { frame.round() } else { frame };
    frame_indices
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let da = (*a.1 as f64 - frame).abs();
            let db = (*b.1 as f64 - frame).abs();
            da.total_cmp(&db).then(b.0.cmp(&a.0))
        })
        .map(|(i, _)| i)
}

/// One line of the prediction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub video_id: String,
    pub boundaries_sec: Vec<f64>,
    pub scores: Vec<f64>,
}

pub fn write_predictions(preds: &[Prediction]) -> Result<String> {
    let mut out = String::new();
    for p in preds {
        out.push_str(&serde_json::to_string(p).map_err(|e| Error::InvalidInput(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::InvalidInput(format!("prediction line {}: {e}", i + 1)))
        })
        .collect()
}
