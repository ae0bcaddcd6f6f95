//! Toy lossless block codec.
//!
//! A video is split into GOPs of one raw I-frame followed by up to
//! `gop_pframes` P-frames. Each P-frame stores one integer motion vector per
//! `block_size`×`block_size` block plus an exact residual, so decoding is
//! bit-exact. Motion vectors follow one convention everywhere in the crate:
//! the prediction for pixel `p` is `reference(clamp(p + mv))`, with per-axis
//! coordinate clamping at the frame border.

mod container;
mod decode;
mod encode;

pub use container::{read_container, read_container_bytes, write_container, write_container_bytes, MAGIC, VERSION};
pub use decode::{decode_gop_exact, decode_sequential, predict_from};
pub use encode::{encode_video, search_block};

use crate::{Error, Result};

/// One RGB frame, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("empty frame {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: u8) {
        self.data[(y * self.width + x) * 3 + c] = value;
    }
}

/// Frame samples held in wide integers, used where decode arithmetic must
/// stay exact (no clipping between P-frames).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WidePlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i32>,
}

impl WidePlane {
    pub fn from_frame(frame: &Frame) -> Self {
        Self {
            width: frame.width,
            height: frame.height,
            data: frame.data.iter().map(|&v| i32::from(v)).collect(),
        }
    }

    /// Saturating conversion to 8-bit samples.
    pub fn to_frame(&self) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v.clamp(0, 255) as u8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub width: usize,
    pub height: usize,
    pub fps: f32,
    pub frames: Vec<Frame>,
}

impl RawVideo {
    pub fn new(fps: f32, frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("video has no frames".into()))?;
        let video = Self {
            width: first.width,
            height: first.height,
            fps,
            frames,
        };
        video.validate()?;
        Ok(video)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("video has no frames".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidInput(format!("fps must be positive, got {}", self.fps)));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.width != self.width || f.height != self.height || f.data.len() != 3 * f.width * f.height {
                return Err(Error::Shape(format!(
                    "frame {i} is {}x{}, video is {}x{}",
                    f.width, f.height, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn duration_sec(&self) -> f64 {
        self.frames.len() as f64 / f64::from(self.fps)
    }
}

/// Encoder settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    pub block_size: usize,
    /// Integer-pel full-search radius; motion components lie in `[-S, S]`.
    pub search_radius: usize,
    /// P-frames per GOP (`T_enc`).
    pub gop_pframes: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            block_size: 8,
            search_radius: 8,
            gop_pframes: 11,
        }
    }
}

impl CodecParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 || self.block_size > u8::MAX as usize {
            return Err(Error::Config(format!("block_size must be in 1..=255, got {}", self.block_size)));
        }
        if self.search_radius > i8::MAX as usize {
            return Err(Error::Config(format!("search_radius must be <= 127, got {}", self.search_radius)));
        }
        if self.gop_pframes == 0 || self.gop_pframes > u8::MAX as usize {
            return Err(Error::Config(format!("gop_pframes must be in 1..=255, got {}", self.gop_pframes)));
        }
        Ok(())
    }
}

/// Number of blocks along an axis of `len` pixels (partial edge blocks count).
#[inline]
pub fn blocks_along(len: usize, block_size: usize) -> usize {
    len.div_ceil(block_size)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MotionVector {
    pub dy: i8,
    pub dx: i8,
}

impl MotionVector {
    pub const ZERO: Self = Self { dy: 0, dx: 0 };

    pub fn new(dy: i8, dx: i8) -> Self {
        Self { dy, dx }
    }

    pub fn max_component(self) -> u8 {
        self.dy.unsigned_abs().max(self.dx.unsigned_abs())
    }
}

/// One motion vector per block, row-major over the block grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MotionField {
    pub rows: usize,
    pub cols: usize,
    pub vectors: Vec<MotionVector>,
}

impl MotionField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            vectors: vec![MotionVector::ZERO; rows * cols],
        }
    }

    pub fn for_frame(height: usize, width: usize, block_size: usize) -> Self {
        Self::zeros(blocks_along(height, block_size), blocks_along(width, block_size))
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> MotionVector {
        self.vectors[row * self.cols + col]
    }

    pub fn max_component(&self) -> u8 {
        self.vectors.iter().map(|v| v.max_component()).max().unwrap_or(0)
    }

    /// Expands the block field to one vector per pixel.
    pub fn densify(&self, block_size: usize, height: usize, width: usize) -> Result<DenseMotion> {
        if block_size == 0 {
            return Err(Error::InvalidInput("block_size must be positive".into()));
        }
        let (rows, cols) = (blocks_along(height, block_size), blocks_along(width, block_size));
        if self.rows != rows || self.cols != cols || self.vectors.len() != rows * cols {
            return Err(Error::Shape(format!(
                "motion grid {}x{} does not tile a {height}x{width} frame with {block_size}px blocks ({rows}x{cols})",
                self.rows, self.cols
            )));
        }
        let mut dense = DenseMotion::zeros(height, width);
        for y in 0..height {
            let row = y / block_size;
            for x in 0..width {
                let mv = self.vectors[row * cols + x / block_size];
                dense.dy[y * width + x] = i32::from(mv.dy);
                dense.dx[y * width + x] = i32::from(mv.dx);
            }
        }
        Ok(dense)
    }
}

/// Per-pixel motion offsets (the 2×H×W field), stored as two planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseMotion {
    pub height: usize,
    pub width: usize,
    pub dy: Vec<i32>,
    pub dx: Vec<i32>,
}

impl DenseMotion {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            dy: vec![0; height * width],
            dx: vec![0; height * width],
        }
    }

    /// Pixel index reached from `(y, x)` after applying the offset there and
    /// clamping each axis into the frame.
    #[inline]
    pub fn target(&self, y: usize, x: usize) -> (usize, usize) {
        let i = y * self.width + x;
        (
            clamp_coord(y as i64 + i64::from(self.dy[i]), self.height),
            clamp_coord(x as i64 + i64::from(self.dx[i]), self.width),
        )
    }
}

#[inline]
pub fn clamp_coord(v: i64, len: usize) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}

pub const RESIDUAL_LIMIT: i16 = 255;

/// Exact prediction error, same layout as [`Frame`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResidualPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<i16>,
}

impl ResidualPlane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; 3 * width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != 3 * self.width * self.height {
            return Err(Error::Shape(format!(
                "residual {}x{} holds {} samples",
                self.width,
                self.height,
                self.data.len()
            )));
        }
        if let Some((i, v)) = self
            .data
            .iter()
            .enumerate()
            .find(|(_, v)| !(-RESIDUAL_LIMIT..=RESIDUAL_LIMIT).contains(*v))
        {
            return Err(Error::Malformed(format!("residual sample {i} = {v} outside [-255, 255]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PFrame {
    pub motion: MotionField,
    pub residual: ResidualPlane,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gop {
    pub iframe: Frame,
    pub pframes: Vec<PFrame>,
}

impl Gop {
    pub fn frame_count(&self) -> usize {
        1 + self.pframes.len()
    }

    /// Checks plane shapes, grid shapes and residual ranges.
    pub fn validate(&self, block_size: usize) -> Result<()> {
        let (w, h) = (self.iframe.width, self.iframe.height);
        if self.iframe.data.len() != 3 * w * h {
            return Err(Error::Shape("I-frame buffer does not match its dimensions".into()));
        }
        let (rows, cols) = (blocks_along(h, block_size), blocks_along(w, block_size));
        for (t, p) in self.pframes.iter().enumerate() {
            if p.motion.rows != rows || p.motion.cols != cols || p.motion.vectors.len() != rows * cols {
                return Err(Error::Malformed(format!(
                    "P-frame {} motion grid {}x{}, expected {rows}x{cols}",
                    t + 1,
                    p.motion.rows,
                    p.motion.cols
                )));
            }
            if p.residual.width != w || p.residual.height != h {
                return Err(Error::Shape(format!(
                    "P-frame {} residual is {}x{}, I-frame is {w}x{h}",
                    t + 1,
                    p.residual.width,
                    p.residual.height
                )));
            }
            p.residual.validate()?;
        }
        Ok(())
    }
}

/// A coded video: stream parameters plus ordered GOPs.
///
/// The search radius is an encoder setting and is not carried in the stream;
/// use [`CompressedVideo::check_search_radius`] to enforce a known bound.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedVideo {
    pub width: usize,
    pub height: usize,
    pub fps: f32,
    pub block_size: usize,
    pub gop_pframes: usize,
    pub gops: Vec<Gop>,
}

impl CompressedVideo {
    pub fn frame_count(&self) -> usize {
        self.gops.iter().map(Gop::frame_count).sum()
    }

    pub fn duration_sec(&self) -> f64 {
        self.frame_count() as f64 / f64::from(self.fps)
    }

    /// Original frame index of each GOP's I-frame.
    pub fn gop_starts(&self) -> Vec<usize> {
        self.gops
            .iter()
            .scan(0usize, |start, g| {
                let s = *start;
                *start += g.frame_count();
                Some(s)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gops.is_empty() {
            return Err(Error::Malformed("stream has no GOPs".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Malformed(format!("fps must be positive, got {}", self.fps)));
        }
        if self.block_size == 0 || self.gop_pframes == 0 {
            return Err(Error::Malformed("block_size and gop_pframes must be positive".into()));
        }
        let last = self.gops.len() - 1;
        for (i, g) in self.gops.iter().enumerate() {
            if g.iframe.width != self.width || g.iframe.height != self.height {
                return Err(Error::Shape(format!(
                    "GOP {i} I-frame is {}x{}, stream is {}x{}",
                    g.iframe.width, g.iframe.height, self.width, self.height
                )));
            }
            let n = g.pframes.len();
            if n > self.gop_pframes || (i != last && n != self.gop_pframes) {
                return Err(Error::Malformed(format!(
                    "GOP {i} has {n} P-frames, expected {}{}",
                    self.gop_pframes,
                    if i == last { " or fewer" } else { "" }
                )));
            }
            g.validate(self.block_size)
                .map_err(|e| Error::Malformed(format!("GOP {i}: {e}")))?;
        }
        Ok(())
    }

    /// Rejects any motion component larger than `radius`.
    pub fn check_search_radius(&self, radius: usize) -> Result<()> {
        for (i, g) in self.gops.iter().enumerate() {
            for (t, p) in g.pframes.iter().enumerate() {
                let m = usize::from(p.motion.max_component());
                if m > radius {
                    return Err(Error::Malformed(format!(
                        "GOP {i} P-frame {} has motion magnitude {m} > search radius {radius}",
                        t + 1
                    )));
                }
            }
        }
        Ok(())
    }
}
