//! Independent reference implementations used as test oracles. Everything
//! here is written with plain loops over `Vec<f64>` and shares no code with
//! the library's tensor operations.
#![allow(dead_code)]

use cvgebd::codec::{Frame, RawVideo};
use cvgebd::tensor::{ParamSet, Tensor};
use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut Xoshiro256PlusPlus) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(&x, &y)| rel_err(x, y)).fold(0.0, f64::max)
}

/// Same-padded 3-D cross-correlation, `w` laid out `[out][in][ky][kx]`.
pub fn conv2d_loop(x: &[f64], cin: usize, h: usize, wd: usize, w: &[f64], b: &[f64], cout: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; cout * h * wd];
    for o in 0..cout {
        for y in 0..h {
            for xx in 0..wd {
                let mut acc = b[o];
                for i in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let sy = y as isize + ky as isize - r;
                            let sx = xx as isize + kx as isize - r;
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                continue;
                            }
                            acc += w[((o * cin + i) * k + ky) * k + kx] * x[(i * h + sy as usize) * wd + sx as usize];
                        }
                    }
                }
                out[(o * h + y) * wd + xx] = acc;
            }
        }
    }
    out
}

fn value<'a>(params: &'a ParamSet, name: &str) -> &'a [f64] {
    params.value(params.find(name).unwrap_or_else(|| panic!("missing parameter {name}"))).data()
}

pub struct BranchOracle {
    pub w_cha: Vec<f64>,
    pub w_spa: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub v: Vec<f64>,
}

/// Straight-line evaluation of one gated branch:
/// z = relu(conv(relu(conv([x_I; x_aux; aux_ds])))),
/// W_cha = σ(W₂·relu(W₁·mean_p z + b₁) + b₂),
/// W_spa = softmax_p(conv₃ₓ₃(z)),
/// v̂ = Σ_p W_spa(p)·W_cha ⊙ x_I(:, p), v = v̂ + mean_p x_aux(:, p).
pub fn branch_oracle(params: &ParamSet, name: &str, x_i: &Tensor, x_aux: &Tensor, aux_ds: &Tensor) -> BranchOracle {
    let (c, h, w) = (x_i.dim(0), x_i.dim(1), x_i.dim(2));
    let a = aux_ds.dim(0);
    let hw = h * w;
    let mut cat = Vec::with_capacity((2 * c + a) * hw);
    cat.extend_from_slice(x_i.data());
    cat.extend_from_slice(x_aux.data());
    cat.extend_from_slice(aux_ds.data());
    let relu = |v: Vec<f64>| v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect::<Vec<_>>();
    let z1 = relu(conv2d_loop(&cat, 2 * c + a, h, w, value(params, &format!("{name}.trunk1.weight")), value(params, &format!("{name}.trunk1.bias")), c, 3));
    let z = relu(conv2d_loop(&z1, c, h, w, value(params, &format!("{name}.trunk2.weight")), value(params, &format!("{name}.trunk2.bias")), c, 3));

    let h_cha: Vec<f64> = (0..c).map(|ch| z[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64).collect();
    let hidden = c / 4;
    let (w1, b1) = (value(params, &format!("{name}.fc1.weight")), value(params, &format!("{name}.fc1.bias")));
    let (w2, b2) = (value(params, &format!("{name}.fc2.weight")), value(params, &format!("{name}.fc2.bias")));
    let mut mid = vec![0.0; hidden];
    for (j, m) in mid.iter_mut().enumerate() {
        let mut s = b1[j];
        for i in 0..c {
            s += w1[j * c + i] * h_cha[i];
        }
        *m = s.max(0.0);
    }
    let mut w_cha = vec![0.0; c];
    for (i, g) in w_cha.iter_mut().enumerate() {
        let mut s = b2[i];
        for j in 0..hidden {
            s += w2[i * hidden + j] * mid[j];
        }
        *g = 1.0 / (1.0 + (-s).exp());
    }

    let logits = conv2d_loop(&z, c, h, w, value(params, &format!("{name}.spatial.weight")), value(params, &format!("{name}.spatial.bias")), 1, 3);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let total: f64 = e.iter().sum();
    let w_spa: Vec<f64> = e.iter().map(|x| x / total).collect();

    let mut v_hat = vec![0.0; c];
    let mut v = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        let mut mean = 0.0;
        for p in 0..hw {
            s += w_cha[ch] * x_i.data()[ch * hw + p] * w_spa[p];
            mean += x_aux.data()[ch * hw + p];
        }
        v_hat[ch] = s;
        v[ch] = s + mean / hw as f64;
    }
    BranchOracle { w_cha, w_spa, v_hat, v }
}

/// φ^l = Σ_{j=1..k} W_j ⊙ ṽ^{l−j}, ψ^l = Σ_{j=1..k} W'_j ⊙ ṽ^{l+j}, written
/// over an explicitly zero-padded copy of the sequence. Returns `2C×L`.
pub fn contrast_loop(seq: &[f64], c: usize, len: usize, left: &[f64], right: &[f64], k: usize) -> Vec<f64> {
    if k == 0 {
        let mut out = seq.to_vec();
        out.extend_from_slice(seq);
        return out;
    }
    let padded_len = len + 2 * k;
    let mut padded = vec![0.0; c * padded_len];
    for ch in 0..c {
        for l in 0..len {
            padded[ch * padded_len + k + l] = seq[ch * len + l];
        }
    }
    let mut out = vec![0.0; 2 * c * len];
    for l in 0..len {
        for ch in 0..c {
            let centre = ch * padded_len + k + l;
            let phi: f64 = (1..=k).map(|j| left[(j - 1) * c + ch] * padded[centre - j]).sum();
            let psi: f64 = (1..=k).map(|j| right[(j - 1) * c + ch] * padded[centre + j]).sum();
            out[ch * len + l] = phi;
            out[(c + ch) * len + l] = psi;
        }
    }
    out
}

/// g_i = min(1, Σ_b exp(−(b − i)² / (2α²))) evaluated term by term.
pub fn soft_labels_direct(boundaries: &[usize], len: usize, alpha: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let mut s = 0.0;
            for &b in boundaries {
                let d = b as f64 - i as f64;
                s += (-(d * d) / (2.0 * alpha * alpha)).exp();
            }
            if s > 1.0 {
                1.0
            } else {
                s
            }
        })
        .collect()
}

/// Maximum bipartite matching size by exhaustive search over assignments
/// of predictions to unused ground-truth boundaries.
pub fn exhaustive_matching(preds: &[f64], gts: &[f64], duration: f64, tau: f64) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, preds: &[f64], gts: &[f64], duration: f64, tau: f64) -> usize {
        if i == preds.len() {
            return 0;
        }
        let mut best = go(i + 1, used, preds, gts, duration, tau);
        for j in 0..gts.len() {
            if !used[j] && (preds[i] - gts[j]).abs() / duration <= tau {
                used[j] = true;
                best = best.max(1 + go(i + 1, used, preds, gts, duration, tau));
                used[j] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; gts.len()], preds, gts, duration, tau)
}

/// A random video: a random texture translated by a per-video velocity,
/// with optional per-pixel noise so that both motion vectors and residuals
/// are exercised.
pub fn random_video(rng: &mut Xoshiro256PlusPlus, width: usize, height: usize, frames: usize, noise: u8) -> RawVideo {
    let (tw, th) = (width + 2 * frames * 3, height + 2 * frames * 3);
    let texture: Vec<u8> = (0..tw * th * 3).map(|_| rng.random()).collect();
    let vy = rng.random_range(-3i64..=3);
    let vx = rng.random_range(-3i64..=3);
    let (cy, cx) = ((th - height) as i64 / 2, (tw - width) as i64 / 2);
    let out = (0..frames as i64)
        .map(|f| {
            let (oy, ox) = ((cy + vy * f) as usize, (cx + vx * f) as usize);
            let mut data = Vec::with_capacity(width * height * 3);
            for y in 0..height {
                for x in 0..width {
                    for ch in 0..3 {
                        let v = texture[((oy + y) * tw + ox + x) * 3 + ch];
                        let n = if noise == 0 { 0 } else { rng.random_range(-i16::from(noise)..=i16::from(noise)) };
                        data.push((i16::from(v) + n).clamp(0, 255) as u8);
                    }
                }
            }
            Frame::new(width, height, data).unwrap()
        })
        .collect();
    RawVideo::new(12.0, out).unwrap()
}
