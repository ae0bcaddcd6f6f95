//! Spatial-channel refinement of I-frame features guided by one auxiliary
//! signal (accumulated motion or accumulated residual).
//!
//! Per sampled P-frame and branch:
//!
//! ```text
//! z     = relu(conv(relu(conv([x_I; x_aux; aux_ds]))))
//! W_cha = σ(W2·relu(W1·gap(z) + b1) + b2)
//! W_spa = softmax(conv3×3(z))          over all positions
//! v̂     = Σ_p (x_I ⊗ W_cha)(:, p) · W_spa(p)
//! v     = v̂ + gap(x_aux)
//! ```

use crate::tensor::ops::{
    channel_mul, channel_mul_backward, concat_channels, global_avg_pool, global_avg_pool_backward, relu,
    relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward, spatial_weighted_sum,
    spatial_weighted_sum_backward, split_channels,
};
use crate::tensor::{Conv2d, Dense, GradBuffer, Initializer, ParamSet, Tensor};
use crate::{Error, Result};

pub const GATE_REDUCTION: usize = 4;

/// Trunk and gates of one branch. Parameters are shared across P-frames.
#[derive(Debug, Clone)]
pub struct ScceBranch {
    pub trunk1: Conv2d,
    pub trunk2: Conv2d,
    pub fc1: Dense,
    pub fc2: Dense,
    pub spatial: Conv2d,
    pub channels: usize,
    pub aux_channels: usize,
}

/// What one branch contributes for one P-frame.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    pub channel_gate: Tensor,
    pub spatial_gate: Tensor,
    pub x_cha: Tensor,
    pub v_hat: Tensor,
    pub v: Tensor,
}

#[derive(Debug, Clone)]
pub struct BranchCache {
    concat: Tensor,
    a1: Tensor,
    r1: Tensor,
    a2: Tensor,
    z: Tensor,
    pooled: Tensor,
    f1: Tensor,
    r_fc: Tensor,
    x_aux_hw: (usize, usize),
}

/// Gradients flowing out of a branch into the two feature grids.
#[derive(Debug, Clone)]
pub struct BranchInputGrads {
    pub x_i: Tensor,
    pub x_aux: Tensor,
}

impl ScceBranch {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        channels: usize,
        aux_channels: usize,
    ) -> Result<Self> {
        if channels == 0 || channels % GATE_REDUCTION != 0 {
            return Err(Error::Config(format!(
                "feature channels must be a positive multiple of {GATE_REDUCTION}, got {channels}"
            )));
        }
        let hidden = channels / GATE_REDUCTION;
        Ok(Self {
            trunk1: Conv2d::new(params, init, &format!("{name}.trunk1"), 2 * channels + aux_channels, channels, 3)?,
            trunk2: Conv2d::new(params, init, &format!("{name}.trunk2"), channels, channels, 3)?,
            fc1: Dense::new(params, init, &format!("{name}.fc1"), channels, hidden)?,
            fc2: Dense::new(params, init, &format!("{name}.fc2"), hidden, channels)?,
            spatial: Conv2d::new(params, init, &format!("{name}.spatial"), channels, 1, 3)?,
            channels,
            aux_channels,
        })
    }

    fn check_inputs(&self, x_i: &Tensor, x_aux: &Tensor, aux_ds: &Tensor) -> Result<()> {
        x_i.expect_rank(3, "x_I")?;
        let (c, h, w) = (x_i.dim(0), x_i.dim(1), x_i.dim(2));
        if c != self.channels {
            return Err(Error::Shape(format!("x_I has {c} channels, branch expects {}", self.channels)));
        }
        x_aux.expect_shape(&[c, h, w], "auxiliary feature")?;
        aux_ds.expect_shape(&[self.aux_channels, h, w], "pooled auxiliary plane")?;
        Ok(())
    }

    /// Two-layer fusion trunk over `[x_I; x_aux; aux_ds]`.
    pub fn trunk(&self, params: &ParamSet, x_i: &Tensor, x_aux: &Tensor, aux_ds: &Tensor) -> Result<Tensor> {
        self.check_inputs(x_i, x_aux, aux_ds)?;
        let cat = concat_channels(&[x_i, x_aux, aux_ds])?;
        let r1 = relu(&self.trunk1.forward(params, &cat)?);
        Ok(relu(&self.trunk2.forward(params, &r1)?))
    }

    /// Channel weights in (0, 1), one per feature channel.
    pub fn channel_gate(&self, params: &ParamSet, z: &Tensor) -> Result<Tensor> {
        let h = global_avg_pool(z)?;
        let hidden = relu(&self.fc1.forward(params, &h)?);
        Ok(sigmoid(&self.fc2.forward(params, &hidden)?))
    }

    /// Spatial weight map (`1×H×W`) summing to one.
    pub fn spatial_gate(&self, params: &ParamSet, z: &Tensor) -> Result<Tensor> {
        softmax(&self.spatial.forward(params, z)?)
    }

    pub fn forward(&self, params: &ParamSet, x_i: &Tensor, x_aux: &Tensor, aux_ds: &Tensor) -> Result<BranchOutput> {
        Ok(self.forward_cached(params, x_i, x_aux, aux_ds)?.0)
    }

    pub fn forward_cached(
        &self,
        params: &ParamSet,
        x_i: &Tensor,
        x_aux: &Tensor,
        aux_ds: &Tensor,
    ) -> Result<(BranchOutput, BranchCache)> {
        self.check_inputs(x_i, x_aux, aux_ds)?;
        let concat = concat_channels(&[x_i, x_aux, aux_ds])?;
        let a1 = self.trunk1.forward(params, &concat)?;
        let r1 = relu(&a1);
        let a2 = self.trunk2.forward(params, &r1)?;
        let z = relu(&a2);

        let pooled = global_avg_pool(&z)?;
        let f1 = self.fc1.forward(params, &pooled)?;
        let r_fc = relu(&f1);
        let channel_gate = sigmoid(&self.fc2.forward(params, &r_fc)?);
        let spatial_gate = softmax(&self.spatial.forward(params, &z)?)?;

        let refined = refine(x_i, &channel_gate, &spatial_gate, x_aux)?;
        let cache = BranchCache {
            concat,
            a1,
            r1,
            a2,
            z,
            pooled,
            f1,
            r_fc,
            x_aux_hw: (x_aux.dim(1), x_aux.dim(2)),
        };
        Ok((
            BranchOutput {
                channel_gate,
                spatial_gate,
                x_cha: refined.0,
                v_hat: refined.1,
                v: refined.2,
            },
            cache,
        ))
    }

    /// Back-propagates `grad_v` (gradient w.r.t. the branch output `v`).
    pub fn backward(
        &self,
        params: &ParamSet,
        x_i: &Tensor,
        out: &BranchOutput,
        cache: &BranchCache,
        grad_v: &Tensor,
        grads: &mut GradBuffer,
    ) -> Result<BranchInputGrads> {
        let (h, w) = cache.x_aux_hw;
        let c = self.channels;
        let mut g_x_aux = global_avg_pool_backward(grad_v, h, w)?;

        let (g_xcha, g_spa) = spatial_weighted_sum_backward(&out.x_cha, &out.spatial_gate, grad_v)?;
        let (mut g_x_i, g_cha) = channel_mul_backward(x_i, &out.channel_gate, &g_xcha)?;

        // spatial gate path
        let g_logits = softmax_backward(&out.spatial_gate, &g_spa)?;
        let mut g_z = self
            .spatial
            .backward(params, &cache.z, &g_logits, grads, true)?
            .expect("input grad requested");

        // channel gate path
        let g_f2 = sigmoid_backward(&out.channel_gate, &g_cha)?;
        let g_rfc = self.fc2.backward(params, &cache.r_fc, &g_f2, grads)?;
        let g_f1 = relu_backward(&cache.f1, &g_rfc)?;
        let g_pooled = self.fc1.backward(params, &cache.pooled, &g_f1, grads)?;
        g_z.add_assign(&global_avg_pool_backward(&g_pooled, h, w)?)?;

        // trunk
        let g_a2 = relu_backward(&cache.a2, &g_z)?;
        let g_r1 = self
            .trunk2
            .backward(params, &cache.r1, &g_a2, grads, true)?
            .expect("input grad requested");
        let g_a1 = relu_backward(&cache.a1, &g_r1)?;
        let g_cat = self
            .trunk1
            .backward(params, &cache.concat, &g_a1, grads, true)?
            .expect("input grad requested");
        let parts = split_channels(&g_cat, &[c, c, self.aux_channels])?;
        g_x_i.add_assign(&parts[0])?;
        g_x_aux.add_assign(&parts[1])?;
        Ok(BranchInputGrads {
            x_i: g_x_i,
            x_aux: g_x_aux,
        })
    }
}

/// Applies both gates to the I-frame features and adds the pooled auxiliary
/// feature. Returns `(x_cha, v̂, v)`.
pub fn refine(x_i: &Tensor, channel_gate: &Tensor, spatial_gate: &Tensor, x_aux: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let x_cha = channel_mul(x_i, channel_gate)?;
    let v_hat = spatial_weighted_sum(&x_cha, spatial_gate)?;
    let mut v = global_avg_pool(x_aux)?;
    v.add_assign(&v_hat)?;
    Ok((x_cha, v_hat, v))
}
