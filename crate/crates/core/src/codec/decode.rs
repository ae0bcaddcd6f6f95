use super::{CompressedVideo, Gop, MotionField, RawVideo, ResidualPlane, WidePlane};
use crate::{Error, Result};

/// Motion-compensated prediction: `out(p) = reference(clamp(p + mv(p)))`.
pub fn predict_from(reference: &WidePlane, motion: &MotionField, block_size: usize) -> Result<WidePlane> {
    let dense = motion.densify(block_size, reference.height, reference.width)?;
    let (w, h) = (reference.width, reference.height);
    let mut out = vec![0i32; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let (ry, rx) = dense.target(y, x);
            let src = (ry * w + rx) * 3;
            let dst = (y * w + x) * 3;
            out[dst..dst + 3].copy_from_slice(&reference.data[src..src + 3]);
        }
    }
    Ok(WidePlane {
        width: w,
        height: h,
        data: out,
    })
}

fn add_residual(plane: &mut WidePlane, residual: &ResidualPlane) {
    for (v, &r) in plane.data.iter_mut().zip(&residual.data) {
        *v += i32::from(r);
    }
}

/// Decodes one GOP without clipping between frames. Element 0 is the I-frame.
pub fn decode_gop_exact(gop: &Gop, block_size: usize) -> Result<Vec<WidePlane>> {
    gop.validate(block_size)?;
    let mut frames = Vec::with_capacity(gop.frame_count());
    frames.push(WidePlane::from_frame(&gop.iframe));
    for p in &gop.pframes {
        let mut next = predict_from(frames.last().expect("non-empty"), &p.motion, block_size)?;
        add_residual(&mut next, &p.residual);
        frames.push(next);
    }
    Ok(frames)
}

/// Sequential motion-compensated reconstruction of every frame.
///
/// Intermediate frames are kept in wide integers; samples are clipped to
/// `[0, 255]` only when converting to the output.
pub fn decode_sequential(cv: &CompressedVideo) -> Result<RawVideo> {
    cv.validate()?;
    let mut frames = Vec::with_capacity(cv.frame_count());
    for gop in &cv.gops {
        frames.extend(decode_gop_exact(gop, cv.block_size)?.iter().map(WidePlane::to_frame));
    }
    if frames.is_empty() {
        return Err(Error::Malformed("stream decoded to zero frames".into()));
    }
    Ok(RawVideo {
        width: cv.width,
        height: cv.height,
        fps: cv.fps,
        frames,
    })
}
