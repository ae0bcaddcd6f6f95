//! Back-tracing of motion vectors and residuals to the GOP's I-frame.
//!
//! After accumulation every P-frame `t` is described relative to the I-frame
//! alone: `F_t(p) = I(p + A_t(p)) + D_t(p)`. The recurrence performs one
//! backward hop per (pixel, frame), so a GOP of `T` P-frames costs `O(T·H·W)`.

use crate::codec::{clamp_coord, DenseMotion, Frame, Gop, WidePlane};
use crate::{Error, Result};

/// Accumulated motion and residual of P-frame `t` (1-based) of a GOP.
///
/// `motion` holds end-to-end offsets that already include border clamping,
/// so `p + motion(p)` is always an in-frame I-frame coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatedPFrame {
    pub t: usize,
    pub motion: DenseMotion,
    /// 3×H×W in the frame's interleaved layout.
    pub residual: Vec<i32>,
}

impl AccumulatedPFrame {
    pub fn height(&self) -> usize {
        self.motion.height
    }

    pub fn width(&self) -> usize {
        self.motion.width
    }
}

/// Runs the accumulation recurrence over one GOP.
///
/// With `q = clamp(p + M_t(p))`, `A_t(p) = (q + A_{t-1}(q)) - p` and
/// `D_t(p) = R_t(p) + D_{t-1}(q)`, starting from `A_0 = 0`, `D_0 = 0`.
pub fn accumulate_gop(gop: &Gop, block_size: usize) -> Result<Vec<AccumulatedPFrame>> {
    gop.validate(block_size)?;
    let (w, h) = (gop.iframe.width, gop.iframe.height);
    let mut out: Vec<AccumulatedPFrame> = Vec::with_capacity(gop.pframes.len());
    let zero_motion = DenseMotion::zeros(h, w);
    let zero_residual = vec![0i32; 3 * w * h];
    for (i, p) in gop.pframes.iter().enumerate() {
        let step = p.motion.densify(block_size, h, w)?;
        let (prev_motion, prev_residual) = match out.last() {
            Some(prev) => (&prev.motion, &prev.residual),
            None => (&zero_motion, &zero_residual),
        };
        let mut motion = DenseMotion::zeros(h, w);
        let mut residual = vec![0i32; 3 * w * h];
        for y in 0..h {
            for x in 0..w {
                let (qy, qx) = step.target(y, x);
                let q = qy * w + qx;
                // previous offsets are pre-clamped, so this lands in-frame
                let sy = qy as i64 + i64::from(prev_motion.dy[q]);
                let sx = qx as i64 + i64::from(prev_motion.dx[q]);
                let pi = y * w + x;
                motion.dy[pi] = (sy - y as i64) as i32;
                motion.dx[pi] = (sx - x as i64) as i32;
                for c in 0..3 {
                    residual[pi * 3 + c] = i32::from(p.residual.data[pi * 3 + c]) + prev_residual[q * 3 + c];
                }
            }
        }
        out.push(AccumulatedPFrame {
            t: i + 1,
            motion,
            residual,
        });
    }
    Ok(out)
}

/// `F_t(p) = I(clamp(p + A_t(p))) + D_t(p)`, without clipping.
pub fn reconstruct_exact(iframe: &Frame, acc: &AccumulatedPFrame) -> Result<WidePlane> {
    let (w, h) = (iframe.width, iframe.height);
    if acc.width() != w || acc.height() != h || acc.residual.len() != 3 * w * h {
        return Err(Error::Shape(format!(
            "accumulated frame is {}x{}, I-frame is {w}x{h}",
            acc.width(),
            acc.height()
        )));
    }
    let mut data = vec![0i32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let pi = y * w + x;
            let sy = clamp_coord(y as i64 + i64::from(acc.motion.dy[pi]), h);
            let sx = clamp_coord(x as i64 + i64::from(acc.motion.dx[pi]), w);
            for c in 0..3 {
                data[pi * 3 + c] = i32::from(iframe.at(sy, sx, c)) + acc.residual[pi * 3 + c];
            }
        }
    }
    Ok(WidePlane {
        width: w,
        height: h,
        data,
    })
}

/// Reconstructs P-frame `acc.t` from the I-frame alone, clipped to 8 bits.
pub fn reconstruct_from_accumulated(iframe: &Frame, acc: &AccumulatedPFrame) -> Result<Frame> {
    Ok(reconstruct_exact(iframe, acc)?.to_frame())
}
