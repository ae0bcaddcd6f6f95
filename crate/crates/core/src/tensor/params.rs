use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::Tensor;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKP1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

/// Named parameters in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let zeros = Tensor::zeros(value.shape());
        self.params.push(Param {
            name,
            grad: zeros.clone(),
            velocity: zeros,
            value,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Zero-filled gradient storage shaped like the parameters.
    pub fn grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self.params.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Replaces the stored gradients with `buffer`.
    pub fn set_grads(&mut self, buffer: GradBuffer) -> Result<()> {
        if buffer.grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "gradient buffer has {} entries for {} parameters",
                buffer.grads.len(),
                self.params.len()
            )));
        }
        for (p, g) in self.params.iter_mut().zip(buffer.grads) {
            g.expect_shape(p.value.shape(), &p.name)?;
            p.grad = g;
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let count = u32::try_from(self.params.len()).map_err(|_| Error::InvalidInput("too many parameters".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for p in &self.params {
            let name = p.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::InvalidInput(format!("parameter name too long: {}", p.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            let rank = u8::try_from(p.value.rank()).map_err(|_| Error::InvalidInput("rank exceeds u8".into()))?;
            out.push(rank);
            for &d in p.value.shape() {
                let d = u32::try_from(d).map_err(|_| Error::InvalidInput("dimension exceeds u32".into()))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a checkpoint into a standalone list of `(name, tensor)` pairs.
    pub fn parse_checkpoint(buf: &[u8]) -> Result<Vec<(String, Tensor)>> {
        let mut pos = 0usize;
        let mut take = |n: usize, what: &str| -> Result<&[u8]> {
            if pos + n > buf.len() {
                return Err(Error::Parse {
                    offset: pos,
                    reason: format!("truncated checkpoint: need {n} bytes for {what}"),
                });
            }
            let s = &buf[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let magic = take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                reason: format!("bad checkpoint magic {:?}", String::from_utf8_lossy(magic)),
            });
        }
        let count = u32::from_le_bytes(take(4, "count")?.try_into().expect("4 bytes"));
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2, "name length")?.try_into().expect("2 bytes"));
            let name = String::from_utf8(take(usize::from(len), "name")?.to_vec()).map_err(|_| Error::Parse {
                offset: 0,
                reason: "parameter name is not UTF-8".into(),
            })?;
            let rank = take(1, "rank")?[0];
            let mut shape = Vec::with_capacity(usize::from(rank));
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(take(4, "dim")?.try_into().expect("4 bytes")) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = take(8 * n, &name)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            out.push((name, Tensor::from_vec(&shape, data)?));
        }
        if pos != buf.len() {
            return Err(Error::Parse {
                offset: pos,
                reason: "trailing bytes after checkpoint".into(),
            });
        }
        Ok(out)
    }

    /// Loads values from a checkpoint whose names and shapes must match this
    /// set exactly, in order.
    pub fn load_checkpoint_bytes(&mut self, buf: &[u8]) -> Result<()> {
        let entries = Self::parse_checkpoint(buf)?;
        if entries.len() != self.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameters, model expects {}",
                entries.len(),
                self.params.len()
            )));
        }
        for (p, (name, value)) in self.params.iter().zip(&entries) {
            if &p.name != name || p.value.shape() != value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint parameter {name:?} {:?} does not match model parameter {:?} {:?}",
                    value.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
        }
        for (p, (_, value)) in self.params.iter_mut().zip(entries) {
            p.value = value;
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_checkpoint_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        self.load_checkpoint_bytes(&bytes)
    }
}

/// Gradients for every parameter of a [`ParamSet`], indexed by [`ParamId`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<Tensor>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor) -> Result<()> {
        self.grads[id.0].add_assign(grad)
    }

    pub fn add(&mut self, other: &GradBuffer) -> Result<()> {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.scale(factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }
}

/// Seeded fan-in-scaled uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`.
pub struct Initializer {
    rng: Xoshiro256PlusPlus,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn fan_in_uniform(&mut self, shape: &[usize], fan_in: usize) -> Tensor {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        Tensor::from_vec(shape, data).expect("length matches shape")
    }
}
