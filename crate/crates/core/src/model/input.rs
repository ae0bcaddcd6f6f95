//! Conversion of a compressed stream into normalized network inputs.

use crate::accumulate::{accumulate_gop, AccumulatedPFrame};
use crate::codec::{CompressedVideo, Frame};
use crate::tensor::ops::avg_pool;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Evenly spaced P-frame indices (1-based) out of `available`:
/// `t_j = round(j·n / (s + 1))` for `j = 1..=s`, `s = min(sample_t, n)`,
/// ascending and without duplicates.
pub fn sample_pframe_indices(available: usize, sample_t: usize) -> Vec<usize> {
    let s = sample_t.min(available);
    let mut out: Vec<usize> = (1..=s)
        .map(|j| ((j * available) as f64 / (s + 1) as f64).round() as usize)
        .map(|t| t.clamp(1, available))
        .collect();
    out.dedup();
    out
}

/// Network inputs for one sampled P-frame.
#[derive(Debug, Clone)]
pub struct PFrameInput {
    /// 1-based index within the GOP.
    pub t: usize,
    /// Accumulated offsets `(dy, dx)` divided by the search radius, `2×H×W`.
    pub motion: Tensor,
    /// Accumulated residual divided by 255, `3×H×W`.
    pub residual: Tensor,
}

#[derive(Debug, Clone)]
pub struct GopInput {
    /// Frame index of the I-frame within the video.
    pub start_frame: usize,
    /// RGB scaled to [0, 1], `3×H×W`.
    pub iframe: Tensor,
    pub pframes: Vec<PFrameInput>,
}

impl GopInput {
    /// Original frame indices of the embeddings this GOP produces: the
    /// I-frame followed by each sampled P-frame.
    pub fn frame_indices(&self) -> Vec<usize> {
        std::iter::once(self.start_frame)
            .chain(self.pframes.iter().map(|p| self.start_frame + p.t))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct VideoInput {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub num_frames: usize,
    pub gops: Vec<GopInput>,
}

impl VideoInput {
    pub fn duration_sec(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }

    /// Frame indices of the whole embedding sequence.
    pub fn frame_indices(&self) -> Vec<usize> {
        self.gops.iter().flat_map(GopInput::frame_indices).collect()
    }

    pub fn sequence_len(&self) -> usize {
        self.gops.iter().map(|g| 1 + g.pframes.len()).sum()
    }
}

pub fn frame_tensor(frame: &Frame) -> Tensor {
    let (w, h) = (frame.width, frame.height);
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in frame.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = f64::from(px[c]) / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("frame buffer matches its dimensions")
}

pub fn motion_tensor(acc: &AccumulatedPFrame, search_radius: usize) -> Tensor {
    let n = acc.width() * acc.height();
    let scale = 1.0 / search_radius as f64;
    let data = acc.motion.dy.iter().chain(&acc.motion.dx).map(|&v| f64::from(v) * scale).collect::<Vec<_>>();
    debug_assert_eq!(data.len(), 2 * n);
    Tensor::from_vec(&[2, acc.height(), acc.width()], data).expect("motion planes match frame size")
}

pub fn residual_tensor(acc: &AccumulatedPFrame) -> Tensor {
    let n = acc.width() * acc.height();
    let mut data = vec![0.0; 3 * n];
    for (i, px) in acc.residual.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * n + i] = f64::from(px[c]) / 255.0;
        }
    }
    Tensor::from_vec(&[3, acc.height(), acc.width()], data).expect("residual planes match frame size")
}

/// Accumulates every GOP and keeps the sampled P-frames.
///
/// `stride` is the total downsampling of the feature encoders; frame sides
/// must be divisible by it.
pub fn build_video_input(
    cv: &CompressedVideo,
    search_radius: usize,
    sample_t: usize,
    stride: usize,
) -> Result<VideoInput> {
    if search_radius == 0 {
        return Err(Error::Config("search radius must be positive".into()));
    }
    if cv.width % stride != 0 || cv.height % stride != 0 {
        return Err(Error::InvalidInput(format!(
            "frame size {}x{} is not divisible by {stride}",
            cv.width, cv.height
        )));
    }
    cv.check_search_radius(search_radius)?;
    let mut gops = Vec::with_capacity(cv.gops.len());
    for (gop, start_frame) in cv.gops.iter().zip(cv.gop_starts()) {
        let acc = accumulate_gop(gop, cv.block_size)?;
        let pframes = sample_pframe_indices(acc.len(), sample_t)
            .into_iter()
            .map(|t| {
                let a = &acc[t - 1];
                PFrameInput {
                    t,
                    motion: motion_tensor(a, search_radius),
                    residual: residual_tensor(a),
                }
            })
            .collect();
        gops.push(GopInput {
            start_frame,
            iframe: frame_tensor(&gop.iframe),
            pframes,
        });
    }
    Ok(VideoInput {
        width: cv.width,
        height: cv.height,
        fps: f64::from(cv.fps),
        num_frames: cv.frame_count(),
        gops,
    })
}

/// Auxiliary plane average-pooled down to the feature grid.
pub fn pooled_aux(plane: &Tensor, stride: usize) -> Result<Tensor> {
    avg_pool(plane, stride)
}
