//! The compressed-domain boundary model: feature encoders, the per-GOP
//! spatial-channel encoder, and the boundary head.

mod backbone;
mod input;
mod scce;

pub use backbone::{ConvEncoder, EncoderCache};
pub use input::{
    build_video_input, frame_tensor, motion_tensor, pooled_aux, residual_tensor, sample_pframe_indices, GopInput,
    PFrameInput, VideoInput,
};
pub use scce::{refine, BranchCache, BranchInputGrads, BranchOutput, ScceBranch, GATE_REDUCTION};

use serde::{Deserialize, Serialize};

use crate::head::{bce_with_logits, BoundaryHead, HeadCache};
use crate::tensor::ops::{global_avg_pool, global_avg_pool_backward, sigmoid_scalar};
use crate::tensor::{GradBuffer, Initializer, ParamSet, Tensor};
use crate::{Error, Result};

/// How P-frame embeddings are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Gated refinement of the I-frame features.
    Scce,
    /// `ṽ = gap(x_M) + gap(x_R)`, no gates.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub window: usize,
    pub encoder: EncoderKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            window: 8,
            encoder: EncoderKind::Scce,
        }
    }
}

/// All layers plus the parameters they index into.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub f_i: ConvEncoder,
    pub f_m: ConvEncoder,
    pub f_r: ConvEncoder,
    /// Motion and residual branches; absent for the vanilla encoder.
    pub branches: Option<(ScceBranch, ScceBranch)>,
    pub head: BoundaryHead,
}

/// Embeddings of one P-frame with the per-branch pieces kept for inspection.
#[derive(Debug, Clone)]
pub struct PFrameEmbedding {
    pub t: usize,
    pub v_tilde: Tensor,
    pub motion: Option<BranchOutput>,
    pub residual: Option<BranchOutput>,
    pub v_m: Tensor,
    pub v_r: Tensor,
}

/// `[e_I, ṽ^{t_1}, …]` for one GOP with the original frame index of each.
#[derive(Debug, Clone)]
pub struct GopEmbeddings {
    pub e_i: Tensor,
    pub pframes: Vec<PFrameEmbedding>,
    pub frame_indices: Vec<usize>,
}

impl GopEmbeddings {
    pub fn vectors(&self) -> impl Iterator<Item = &Tensor> {
        std::iter::once(&self.e_i).chain(self.pframes.iter().map(|p| &p.v_tilde))
    }
}

struct PFrameCache {
    m: EncoderCache,
    r: EncoderCache,
    x_m: Tensor,
    x_r: Tensor,
    branch: Option<(BranchOutput, BranchCache, BranchOutput, BranchCache)>,
}

struct GopCache {
    x_i: Tensor,
    i_cache: EncoderCache,
    pframes: Vec<PFrameCache>,
}

/// Result of a full forward pass over one video.
#[derive(Debug, Clone)]
pub struct VideoOutput {
    /// `C×L` embedding sequence.
    pub embeddings: Tensor,
    pub frame_indices: Vec<usize>,
    pub logits: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let c = config.channels;
        if c == 0 || c % GATE_REDUCTION != 0 {
            return Err(Error::Config(format!(
                "channels must be a positive multiple of {GATE_REDUCTION}, got {c}"
            )));
        }
        let mut params = ParamSet::new();
        let mut init = Initializer::new(seed);
        let f_i = ConvEncoder::new(&mut params, &mut init, "f_i", &[3, 16, 32, c], 1)?;
        let f_m = ConvEncoder::new(&mut params, &mut init, "f_m", &[2, 16, c], 2)?;
        let f_r = ConvEncoder::new(&mut params, &mut init, "f_r", &[3, 16, c], 2)?;
        let branches = match config.encoder {
            EncoderKind::Scce => Some((
                ScceBranch::new(&mut params, &mut init, "scce_m", c, 2)?,
                ScceBranch::new(&mut params, &mut init, "scce_r", c, 3)?,
            )),
            EncoderKind::Vanilla => None,
        };
        let head = BoundaryHead::new(&mut params, &mut init, c, config.window)?;
        Ok(Self {
            config,
            params,
            f_i,
            f_m,
            f_r,
            branches,
            head,
        })
    }

    /// Total downsampling from frame to feature grid.
    pub fn stride(&self) -> usize {
        self.f_i.stride()
    }

    pub fn encode_gop(&self, params: &ParamSet, gop: &GopInput) -> Result<GopEmbeddings> {
        Ok(self.encode_gop_cached(params, gop)?.0)
    }

    fn encode_gop_cached(&self, params: &ParamSet, gop: &GopInput) -> Result<(GopEmbeddings, GopCache)> {
        let (x_i, i_cache) = self.f_i.forward_cached(params, &gop.iframe)?;
        let e_i = global_avg_pool(&x_i)?;
        let stride = self.stride();
        let mut pframes = Vec::with_capacity(gop.pframes.len());
        let mut caches = Vec::with_capacity(gop.pframes.len());
        for p in &gop.pframes {
            let (x_m, m) = self.f_m.forward_cached(params, &p.motion)?;
            let (x_r, r) = self.f_r.forward_cached(params, &p.residual)?;
            let (emb, branch) = match &self.branches {
                Some((bm, br)) => {
                    let (om, cm) = bm.forward_cached(params, &x_i, &x_m, &pooled_aux(&p.motion, stride)?)?;
                    let (or, cr) = br.forward_cached(params, &x_i, &x_r, &pooled_aux(&p.residual, stride)?)?;
                    let mut v_tilde = om.v.clone();
                    v_tilde.add_assign(&or.v)?;
                    let emb = PFrameEmbedding {
                        t: p.t,
                        v_tilde,
                        v_m: om.v.clone(),
                        v_r: or.v.clone(),
                        motion: Some(om.clone()),
                        residual: Some(or.clone()),
                    };
                    (emb, Some((om, cm, or, cr)))
                }
                None => {
                    let v_m = global_avg_pool(&x_m)?;
                    let v_r = global_avg_pool(&x_r)?;
                    let mut v_tilde = v_m.clone();
                    v_tilde.add_assign(&v_r)?;
                    let emb = PFrameEmbedding {
                        t: p.t,
                        v_tilde,
                        v_m,
                        v_r,
                        motion: None,
                        residual: None,
                    };
                    (emb, None)
                }
            };
            pframes.push(emb);
            caches.push(PFrameCache { m, r, x_m, x_r, branch });
        }
        Ok((
            GopEmbeddings {
                e_i,
                pframes,
                frame_indices: gop.frame_indices(),
            },
            GopCache {
                x_i,
                i_cache,
                pframes: caches,
            },
        ))
    }

    /// Back-propagates gradients w.r.t. each embedding of the GOP (in
    /// sequence order, starting with `e_I`).
    fn backward_gop(
        &self,
        params: &ParamSet,
        cache: &GopCache,
        grad_embeddings: &[Tensor],
        grads: &mut GradBuffer,
    ) -> Result<()> {
        let (h, w) = (cache.x_i.dim(1), cache.x_i.dim(2));
        let mut g_x_i = global_avg_pool_backward(&grad_embeddings[0], h, w)?;
        for (pc, g_v) in cache.pframes.iter().zip(&grad_embeddings[1..]) {
            let (g_x_m, g_x_r) = match (&self.branches, &pc.branch) {
                (Some((bm, br)), Some((om, cm, or, cr))) => {
                    let gm = bm.backward(params, &cache.x_i, om, cm, g_v, grads)?;
                    let gr = br.backward(params, &cache.x_i, or, cr, g_v, grads)?;
                    g_x_i.add_assign(&gm.x_i)?;
                    g_x_i.add_assign(&gr.x_i)?;
                    (gm.x_aux, gr.x_aux)
                }
                _ => (
                    global_avg_pool_backward(g_v, pc.x_m.dim(1), pc.x_m.dim(2))?,
                    global_avg_pool_backward(g_v, pc.x_r.dim(1), pc.x_r.dim(2))?,
                ),
            };
            self.f_m.backward(params, &pc.m, &g_x_m, grads)?;
            self.f_r.backward(params, &pc.r, &g_x_r, grads)?;
        }
        self.f_i.backward(params, &cache.i_cache, &g_x_i, grads)
    }

    fn forward_cached(&self, params: &ParamSet, video: &VideoInput) -> Result<(VideoOutput, Vec<GopCache>, HeadCache)> {
        if video.gops.is_empty() {
            return Err(Error::InvalidInput("video has no GOPs".into()));
        }
        let c = self.config.channels;
        let mut caches = Vec::with_capacity(video.gops.len());
        let mut columns: Vec<Tensor> = Vec::with_capacity(video.sequence_len());
        let mut frame_indices = Vec::with_capacity(video.sequence_len());
        for gop in &video.gops {
            let (emb, cache) = self.encode_gop_cached(params, gop)?;
            columns.extend(emb.vectors().cloned());
            frame_indices.extend(&emb.frame_indices);
            caches.push(cache);
        }
        let len = columns.len();
        let mut seq = vec![0.0; c * len];
        for (l, col) in columns.iter().enumerate() {
            for (ch, &v) in col.data().iter().enumerate() {
                seq[ch * len + l] = v;
            }
        }
        let embeddings = Tensor::from_vec(&[c, len], seq)?;
        let (logits, head_cache) = self.head.logits_cached(params, &embeddings)?;
        let logits = logits.into_data();
        let scores = logits.iter().map(|&z| sigmoid_scalar(z)).collect();
        Ok((
            VideoOutput {
                embeddings,
                frame_indices,
                logits,
                scores,
            },
            caches,
            head_cache,
        ))
    }

    pub fn forward_with(&self, params: &ParamSet, video: &VideoInput) -> Result<VideoOutput> {
        Ok(self.forward_cached(params, video)?.0)
    }

    pub fn forward(&self, video: &VideoInput) -> Result<VideoOutput> {
        self.forward_with(&self.params, video)
    }

    /// Mean BCE against `targets` (one per sequence position) and the
    /// gradient of every parameter, evaluated at `params`.
    pub fn loss_and_grad_with(&self, params: &ParamSet, video: &VideoInput, targets: &[f64]) -> Result<(f64, GradBuffer)> {
        let (out, caches, head_cache) = self.forward_cached(params, video)?;
        let (loss, g_logits) = bce_with_logits(&out.logits, targets)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        let len = out.logits.len();
        let mut grads = params.grad_buffer();
        let g_seq = self
            .head
            .backward(params, &out.embeddings, &head_cache, &Tensor::from_vec(&[1, len], g_logits)?, &mut grads)?;
        let c = self.config.channels;
        let g = g_seq.data();
        let mut l = 0;
        for (gop_cache, gop) in caches.iter().zip(&video.gops) {
            let n = 1 + gop.pframes.len();
            let per_embedding: Vec<Tensor> = (l..l + n)
                .map(|pos| Tensor::vector((0..c).map(|ch| g[ch * len + pos]).collect()))
                .collect();
            self.backward_gop(params, gop_cache, &per_embedding, &mut grads)?;
            l += n;
        }
        Ok((loss, grads))
    }

    pub fn loss_and_grad(&self, video: &VideoInput, targets: &[f64]) -> Result<(f64, GradBuffer)> {
        self.loss_and_grad_with(&self.params, video, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::gaussian_soft_labels;
    use crate::tensor::{gradient_check, GradCheckOptions};
    use rand::{RngExt, SeedableRng};
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn random(shape: &[usize], rng: &mut Xoshiro256PlusPlus, scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    fn toy_video(seed: u64, gops: usize, side: usize, sample: usize) -> VideoInput {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        VideoInput {
            width: side,
            height: side,
            fps: 12.0,
            num_frames: gops * 12,
            gops: (0..gops)
                .map(|g| GopInput {
                    start_frame: g * 12,
                    iframe: random(&[3, side, side], &mut rng, 1.0).clone(),
                    pframes: sample_pframe_indices(11, sample)
                        .into_iter()
                        .map(|t| PFrameInput {
                            t,
                            motion: random(&[2, side, side], &mut rng, 1.0),
                            residual: random(&[3, side, side], &mut rng, 0.5),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    fn perturb_biases(model: &mut Model, seed: u64) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for p in model.params.iter_mut() {
            if p.name.ends_with(".bias") {
                p.value.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
        }
    }

    #[test]
    fn vanilla_allocates_no_gates() {
        let cfg = ModelConfig {
            encoder: EncoderKind::Vanilla,
            ..ModelConfig::default()
        };
        let m = Model::new(cfg, 0).unwrap();
        assert!(m.params.iter().all(|p| !p.name.starts_with("scce")));
        assert!(m.branches.is_none());
    }

    #[test]
    fn sequence_layout_and_embedding_identity() {
        let m = Model::new(
            ModelConfig {
                channels: 8,
                window: 2,
                encoder: EncoderKind::Scce,
            },
            1,
        )
        .unwrap();
        let video = toy_video(2, 2, 16, 3);
        let out = m.forward(&video).unwrap();
        assert_eq!(out.frame_indices, vec![0, 3, 6, 8, 12, 15, 18, 20]);
        assert_eq!(out.embeddings.shape(), &[8, 8]);
        assert!(out.scores.iter().all(|&s| s > 0.0 && s < 1.0));
        let gop = m.encode_gop(&m.params, &video.gops[0]).unwrap();
        for p in &gop.pframes {
            let mut sum = p.v_m.clone();
            sum.add_assign(&p.v_r).unwrap();
            assert_eq!(sum, p.v_tilde);
        }
        let again = m.encode_gop(&m.params, &video.gops[0]).unwrap();
        assert_eq!(gop.vectors().cloned().collect::<Vec<_>>(), again.vectors().cloned().collect::<Vec<_>>());
    }

    #[test]
    fn no_sampled_pframes_gives_iframe_only() {
        let m = Model::new(
            ModelConfig {
                channels: 4,
                window: 1,
                encoder: EncoderKind::Scce,
            },
            3,
        )
        .unwrap();
        let video = toy_video(4, 1, 16, 0);
        let gop = m.encode_gop(&m.params, &video.gops[0]).unwrap();
        assert!(gop.pframes.is_empty());
        assert_eq!(gop.frame_indices, vec![0]);
    }

    #[test]
    fn full_model_gradients() {
        for encoder in [EncoderKind::Scce, EncoderKind::Vanilla] {
            let mut m = Model::new(
                ModelConfig {
                    channels: 4,
                    window: 2,
                    encoder,
                },
                7,
            )
            .unwrap();
            perturb_biases(&mut m, 8);
            let video = toy_video(9, 2, 16, 2);
            let targets = gaussian_soft_labels(&[2], video.sequence_len(), 1.0).unwrap();
            let report = gradient_check(
                |ps| m.loss_and_grad_with(ps, &video, &targets),
                &m.params,
                &GradCheckOptions {
                    tolerance: 1e-5,
                    max_entries_per_param: Some(12),
                    ..GradCheckOptions::default()
                },
            )
            .unwrap();
            assert!(report.passed, "{encoder:?}: {report:?}");
        }
    }
}
