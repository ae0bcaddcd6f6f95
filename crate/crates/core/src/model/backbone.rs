//! Small convolutional encoders that map an image-like plane to the shared
//! `C×H/8×W/8` feature space.

use crate::tensor::ops::{avg_pool, avg_pool_backward, relu, relu_backward};
use crate::tensor::{Conv2d, GradBuffer, Initializer, ParamSet, Tensor};
use crate::{Error, Result};

/// Stacked `conv3×3 → relu → 2×2 average` stages, optionally preceded by a
/// parameter-free average downsample of the input.
#[derive(Debug, Clone)]
pub struct ConvEncoder {
    pub stages: Vec<Conv2d>,
    pub input_downsample: usize,
}

/// Intermediate values kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    stage_inputs: Vec<Tensor>,
    pre_activations: Vec<Tensor>,
}

impl ConvEncoder {
    /// `widths` lists channel counts from input to output, one stage per
    /// consecutive pair.
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        widths: &[usize],
        input_downsample: usize,
    ) -> Result<Self> {
        if widths.len() < 2 || input_downsample == 0 {
            return Err(Error::Config(format!(
                "encoder {name} needs at least one stage and a positive downsample"
            )));
        }
        let stages = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Conv2d::new(params, init, &format!("{name}.conv{}", i + 1), w[0], w[1], 3))
            .collect::<Result<_>>()?;
        Ok(Self {
            stages,
            input_downsample,
        })
    }

    /// Total spatial reduction from input to output.
    pub fn stride(&self) -> usize {
        self.input_downsample << self.stages.len()
    }

    pub fn in_channels(&self) -> usize {
        self.stages[0].in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.stages[self.stages.len() - 1].out_channels
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        x.expect_rank(3, "encoder input")?;
        let s = self.stride();
        if x.dim(0) != self.in_channels() {
            return Err(Error::Shape(format!(
                "encoder expects {} channels, got {:?}",
                self.in_channels(),
                x.shape()
            )));
        }
        if x.dim(1) % s != 0 || x.dim(2) % s != 0 {
            return Err(Error::InvalidInput(format!(
                "frame size {}x{} is not divisible by {s}",
                x.dim(2),
                x.dim(1)
            )));
        }
        Ok(())
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_cached(params, x)?.0)
    }

    pub fn forward_cached(&self, params: &ParamSet, x: &Tensor) -> Result<(Tensor, EncoderCache)> {
        self.check(x)?;
        let mut cur = if self.input_downsample > 1 {
            avg_pool(x, self.input_downsample)?
        } else {
            x.clone()
        };
        let mut cache = EncoderCache {
            stage_inputs: Vec::with_capacity(self.stages.len()),
            pre_activations: Vec::with_capacity(self.stages.len()),
        };
        for conv in &self.stages {
            let pre = conv.forward(params, &cur)?;
            let next = avg_pool(&relu(&pre), 2)?;
            cache.stage_inputs.push(std::mem::replace(&mut cur, next));
            cache.pre_activations.push(pre);
        }
        Ok((cur, cache))
    }

    /// Accumulates parameter gradients. The encoders sit directly on data, so
    /// no input gradient is produced.
    pub fn backward(
        &self,
        params: &ParamSet,
        cache: &EncoderCache,
        grad_out: &Tensor,
        grads: &mut GradBuffer,
    ) -> Result<()> {
        let mut g = grad_out.clone();
        for (i, conv) in self.stages.iter().enumerate().rev() {
            let g_pre = relu_backward(&cache.pre_activations[i], &avg_pool_backward(&g, 2)?)?;
            match conv.backward(params, &cache.stage_inputs[i], &g_pre, grads, i > 0)? {
                Some(gx) => g = gx,
                None => break,
            }
        }
        Ok(())
    }
}
