use rayon::prelude::*;

use super::{
    blocks_along, CodecParams, CompressedVideo, Frame, Gop, MotionField, MotionVector, PFrame, RawVideo,
    ResidualPlane,
};
use crate::{Error, Result};

/// Reference frame with `pad` pixels of edge replication on every side, so a
/// read at `p + offset` with `|offset| <= pad` equals a per-axis clamped read.
struct PaddedRef {
    pad: usize,
    stride: usize,
    data: Vec<u8>,
}

impl PaddedRef {
    fn new(frame: &Frame, pad: usize) -> Self {
        let (w, h) = (frame.width, frame.height);
        let stride = w + 2 * pad;
        let mut data = vec![0u8; 3 * stride * (h + 2 * pad)];
        for py in 0..h + 2 * pad {
            let sy = py.saturating_sub(pad).min(h - 1);
            for px in 0..stride {
                let sx = px.saturating_sub(pad).min(w - 1);
                let src = (sy * w + sx) * 3;
                let dst = (py * stride + px) * 3;
                data[dst..dst + 3].copy_from_slice(&frame.data[src..src + 3]);
            }
        }
        Self { pad, stride, data }
    }

    /// Interleaved RGB run starting at frame coordinate `(y, x)`; the coordinate
    /// may lie up to `pad` outside the frame.
    #[inline]
    fn row(&self, y: isize, x: isize, len: usize) -> &[u8] {
        let py = (y + self.pad as isize) as usize;
        let px = (x + self.pad as isize) as usize;
        let start = (py * self.stride + px) * 3;
        &self.data[start..start + 3 * len]
    }
}

#[inline]
fn sad(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| u32::from(x.abs_diff(y))).sum()
}

/// Full integer-pel search for one block.
///
/// Returns the offset with the lowest SAD over the block's actual extent;
/// ties prefer the smallest `|dy| + |dx|`, then the first offset in row-major
/// order. Also returns the SAD of the winner.
pub fn search_block(
    current: &Frame,
    reference: &Frame,
    block_row: usize,
    block_col: usize,
    block_size: usize,
    search_radius: usize,
) -> (MotionVector, u32) {
    let padded = PaddedRef::new(reference, search_radius);
    search_padded(current, &padded, block_row, block_col, block_size, search_radius)
}

fn search_padded(
    current: &Frame,
    reference: &PaddedRef,
    block_row: usize,
    block_col: usize,
    block_size: usize,
    radius: usize,
) -> (MotionVector, u32) {
    let y0 = block_row * block_size;
    let x0 = block_col * block_size;
    let bh = block_size.min(current.height - y0);
    let bw = block_size.min(current.width - x0);
    let r = radius as isize;

    let mut best = MotionVector::ZERO;
    let mut best_sad = u32::MAX;
    let mut best_len = u32::MAX;
    for dy in -r..=r {
        for dx in -r..=r {
            let len = (dy.unsigned_abs() + dx.unsigned_abs()) as u32;
            let mut total = 0u32;
            for y in 0..bh {
                let cur_start = ((y0 + y) * current.width + x0) * 3;
                let cur = &current.data[cur_start..cur_start + 3 * bw];
                total += sad(cur, reference.row((y0 + y) as isize + dy, x0 as isize + dx, bw));
                if total > best_sad {
                    break;
                }
            }
            if total < best_sad || (total == best_sad && len < best_len) {
                best_sad = total;
                best_len = len;
                best = MotionVector::new(dy as i8, dx as i8);
            }
        }
    }
    (best, best_sad)
}

fn encode_pframe(current: &Frame, reference: &Frame, params: &CodecParams) -> PFrame {
    let padded = PaddedRef::new(reference, params.search_radius);
    let b = params.block_size;
    let mut motion = MotionField::for_frame(current.height, current.width, b);
    let mut residual = ResidualPlane::zeros(current.width, current.height);
    for br in 0..motion.rows {
        for bc in 0..motion.cols {
            let (mv, _) = search_padded(current, &padded, br, bc, b, params.search_radius);
            motion.vectors[br * motion.cols + bc] = mv;
            let y0 = br * b;
            let x0 = bc * b;
            let bh = b.min(current.height - y0);
            let bw = b.min(current.width - x0);
            for y in y0..y0 + bh {
                let pred = padded.row(y as isize + isize::from(mv.dy), x0 as isize + isize::from(mv.dx), bw);
                let start = (y * current.width + x0) * 3;
                for (i, &p) in pred.iter().enumerate() {
                    residual.data[start + i] = i16::from(current.data[start + i]) - i16::from(p);
                }
            }
        }
    }
    PFrame { motion, residual }
}

/// Encodes a raw video into GOPs of one I-frame and up to `gop_pframes`
/// P-frames. GOPs are encoded independently (in parallel); the output does not
/// depend on the worker count.
pub fn encode_video(video: &RawVideo, params: &CodecParams) -> Result<CompressedVideo> {
    params.validate()?;
    video.validate()?;
    if video.width > usize::from(u16::MAX) || video.height > usize::from(u16::MAX) {
        return Err(Error::InvalidInput(format!(
            "frame size {}x{} exceeds the container's 16-bit header fields",
            video.width, video.height
        )));
    }
    let gop_len = params.gop_pframes + 1;
    if blocks_along(video.frames.len(), gop_len) > u32::MAX as usize {
        return Err(Error::InvalidInput("too many GOPs for the container header".into()));
    }

    // Residuals are lossless, so each P-frame's reference is the previous raw
    // frame itself.
    let gops = video
        .frames
        .par_chunks(gop_len)
        .map(|chunk| Gop {
            iframe: chunk[0].clone(),
            pframes: chunk
                .windows(2)
                .map(|pair| encode_pframe(&pair[1], &pair[0], params))
                .collect(),
        })
        .collect();

    Ok(CompressedVideo {
        width: video.width,
        height: video.height,
        fps: video.fps,
        block_size: params.block_size,
        gop_pframes: params.gop_pframes,
        gops,
    })
}
