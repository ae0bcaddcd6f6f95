//! On-disk layout (little-endian):
//!
//! ```text
//! "CGV1" | u8 version=1 | u16 width | u16 height | f32 fps | u8 block_size
//!        | u8 t_enc | u32 num_gops
//! per GOP: u8 pframe_count | I-frame 3*H*W bytes (row-major, interleaved RGB)
//!          per P-frame: rows*cols pairs of i8 (dy, dx) | 3*H*W i16 residual
//! ```

use std::path::Path;

use super::{
    blocks_along, CompressedVideo, Frame, Gop, MotionField, MotionVector, PFrame, ResidualPlane, RESIDUAL_LIMIT,
};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CGV1";
pub const VERSION: u8 = 1;

pub fn write_container_bytes(cv: &CompressedVideo) -> Result<Vec<u8>> {
    cv.validate()?;
    let width = u16::try_from(cv.width).map_err(|_| Error::InvalidInput(format!("width {} exceeds u16", cv.width)))?;
    let height =
        u16::try_from(cv.height).map_err(|_| Error::InvalidInput(format!("height {} exceeds u16", cv.height)))?;
    let block_size = u8::try_from(cv.block_size)
        .map_err(|_| Error::InvalidInput(format!("block_size {} exceeds u8", cv.block_size)))?;
    let t_enc = u8::try_from(cv.gop_pframes)
        .map_err(|_| Error::InvalidInput(format!("gop_pframes {} exceeds u8", cv.gop_pframes)))?;
    let num_gops =
        u32::try_from(cv.gops.len()).map_err(|_| Error::InvalidInput("GOP count exceeds u32".into()))?;

    let plane = 3 * cv.width * cv.height;
    let grid = blocks_along(cv.height, cv.block_size) * blocks_along(cv.width, cv.block_size);
    let mut out = Vec::with_capacity(17 + cv.gops.len() * (1 + plane) + cv.frame_count() * (2 * grid + 2 * plane));
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&cv.fps.to_le_bytes());
    out.push(block_size);
    out.push(t_enc);
    out.extend_from_slice(&num_gops.to_le_bytes());
    for gop in &cv.gops {
        // validate() bounds pframes.len() by t_enc, which fits in u8
        out.push(gop.pframes.len() as u8);
        out.extend_from_slice(&gop.iframe.data);
        for p in &gop.pframes {
            for mv in &p.motion.vectors {
                out.push(mv.dy as u8);
                out.push(mv.dx as u8);
            }
            for v in &p.residual.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_container(cv: &CompressedVideo, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_container_bytes(cv)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Parse {
                offset: self.pos,
                reason: format!(
                    "truncated: need {n} bytes for {what}, {} remain",
                    self.buf.len() - self.pos
                ),
            }),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn fail(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }
}

pub fn read_container_bytes(buf: &[u8]) -> Result<CompressedVideo> {
    let mut r = Reader { buf, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(r.fail(
            0,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(magic), "CGV1"),
        ));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(r.fail(4, format!("unsupported version {version}, expected {VERSION}")));
    }
    let width = usize::from(r.u16("width")?);
    let height = usize::from(r.u16("height")?);
    let fps_at = r.pos;
    let fps = r.f32("fps")?;
    let block_size = usize::from(r.u8("block_size")?);
    let t_enc = usize::from(r.u8("t_enc")?);
    let num_gops_at = r.pos;
    let num_gops = r.u32("num_gops")? as usize;
    if width == 0 || height == 0 {
        return Err(r.fail(5, format!("empty frame size {width}x{height}")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(r.fail(fps_at, format!("fps must be positive, got {fps}")));
    }
    if block_size == 0 || t_enc == 0 {
        return Err(r.fail(fps_at + 4, "block_size and t_enc must be positive"));
    }
    if num_gops == 0 {
        return Err(r.fail(num_gops_at, "stream declares zero GOPs"));
    }

    let plane = 3 * width * height;
    let grid = blocks_along(height, block_size) * blocks_along(width, block_size);
    let (rows, cols) = (blocks_along(height, block_size), blocks_along(width, block_size));
    let mut gops = Vec::new();
    for g in 0..num_gops {
        let count_at = r.pos;
        let count = usize::from(r.u8(&format!("GOP {g} P-frame count"))?);
        if count > t_enc || (g + 1 < num_gops && count != t_enc) {
            return Err(r.fail(count_at, format!("GOP {g} declares {count} P-frames with t_enc = {t_enc}")));
        }
        let iframe = Frame {
            width,
            height,
            data: r.take(plane, &format!("GOP {g} I-frame"))?.to_vec(),
        };
        let mut pframes = Vec::with_capacity(count);
        for t in 0..count {
            let mv_bytes = r.take(2 * grid, &format!("GOP {g} P-frame {} motion", t + 1))?;
            let vectors = mv_bytes
                .chunks_exact(2)
                .map(|c| MotionVector::new(c[0] as i8, c[1] as i8))
                .collect();
            let res_at = r.pos;
            let res_bytes = r.take(2 * plane, &format!("GOP {g} P-frame {} residual", t + 1))?;
            let data: Vec<i16> = res_bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect();
            if let Some(i) = data.iter().position(|v| !(-RESIDUAL_LIMIT..=RESIDUAL_LIMIT).contains(v)) {
                return Err(r.fail(
                    res_at + 2 * i,
                    format!("residual sample {} outside [-255, 255]", data[i]),
                ));
            }
            pframes.push(PFrame {
                motion: MotionField { rows, cols, vectors },
                residual: ResidualPlane { width, height, data },
            });
        }
        gops.push(Gop { iframe, pframes });
    }
    if r.pos != buf.len() {
        return Err(r.fail(r.pos, format!("{} trailing bytes after last GOP", buf.len() - r.pos)));
    }
    let cv = CompressedVideo {
        width,
        height,
        fps,
        block_size,
        gop_pframes: t_enc,
        gops,
    };
    cv.validate()?;
    Ok(cv)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<CompressedVideo> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_container_bytes(&bytes)
}
