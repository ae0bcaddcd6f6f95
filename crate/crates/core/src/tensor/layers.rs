//! Parameterized layers: 2-D and 1-D "same" convolutions and dense maps.
//!
//! Convolutions are cross-correlations with stride 1 and zero padding of
//! `kernel / 2`; kernels must be odd.

use super::params::{GradBuffer, Initializer, ParamId, ParamSet};
use super::Tensor;
use crate::{Error, Result};

/// `C = A·B (+ C if accumulate)` on row-major slices with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices covering the strided extents; the output
    // is a dense row-major m×n block.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(Error::Config(format!("kernel size must be odd, got {kernel}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        check_kernel(kernel)?;
        let fan_in = in_channels * kernel * kernel;
        let weight = params.add(
            format!("{name}.weight"),
            init.fan_in_uniform(&[out_channels, in_channels, kernel, kernel], fan_in),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        x.expect_rank(3, "conv2d input")?;
        if x.dim(0) != self.in_channels {
            return Err(Error::Shape(format!(
                "conv2d expects {} input channels, got {:?}",
                self.in_channels,
                x.shape()
            )));
        }
        Ok((x.dim(1), x.dim(2)))
    }

    /// Unfolds the input into a `(C_in·K·K) × (H·W)` patch matrix.
    fn im2col(&self, x: &Tensor, h: usize, w: usize) -> Vec<f64> {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let hw = h * w;
        let mut col = vec![0.0; self.in_channels * k * k * hw];
        let src = x.data();
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * hw;
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let src_row = (ci * h + sy as usize) * w;
                        let dst = row + y * w;
                        let s0 = (src_row as isize + x_lo as isize + dx) as usize;
                        col[dst + x_lo..dst + x_hi].copy_from_slice(&src[s0..s0 + (x_hi - x_lo)]);
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[f64], h: usize, w: usize) -> Tensor {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let hw = h * w;
        let mut out = Tensor::zeros(&[self.in_channels, h, w]);
        let dst = out.data_mut();
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ci * k + ky) * k + kx) * hw;
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                            continue;
                        }
                        let base = ((ci * h + sy as usize) * w) as isize + dx;
                        for xx in x_lo..x_hi {
                            dst[(base + xx as isize) as usize] += col[row + y * w + xx];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let (h, w) = self.check_input(x)?;
        let hw = h * w;
        let kk = self.in_channels * self.kernel * self.kernel;
        let col = self.im2col(x, h, w);
        let weight = params.value(self.weight).data();
        let bias = params.value(self.bias).data();
        let mut out = vec![0.0; self.out_channels * hw];
        for (row, &b) in out.chunks_exact_mut(hw).zip(bias) {
            row.fill(b);
        }
        gemm(
            self.out_channels,
            kk,
            hw,
            weight,
            (kk as isize, 1),
            &col,
            (hw as isize, 1),
            &mut out,
            true,
        );
        Tensor::from_vec(&[self.out_channels, h, w], out)
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut GradBuffer,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        let (h, w) = self.check_input(x)?;
        grad_out.expect_shape(&[self.out_channels, h, w], "conv2d grad")?;
        let hw = h * w;
        let kk = self.in_channels * self.kernel * self.kernel;
        let col = self.im2col(x, h, w);
        let g = grad_out.data();

        // dW += G · colᵀ
        gemm(
            self.out_channels,
            hw,
            kk,
            g,
            (hw as isize, 1),
            &col,
            (1, hw as isize),
            grads.get_mut(self.weight).data_mut(),
            true,
        );
        for (gb, row) in grads.get_mut(self.bias).data_mut().iter_mut().zip(g.chunks_exact(hw)) {
            *gb += row.iter().sum::<f64>();
        }
        if !need_input_grad {
            return Ok(None);
        }
        // dcol = Wᵀ · G
        let mut dcol = vec![0.0; kk * hw];
        gemm(
            kk,
            self.out_channels,
            hw,
            params.value(self.weight).data(),
            (1, kk as isize),
            g,
            (hw as isize, 1),
            &mut dcol,
            false,
        );
        Ok(Some(self.col2im(&dcol, h, w)))
    }
}

/// Convolution along the length of a `C×L` sequence.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv1d {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Result<Self> {
        check_kernel(kernel)?;
        let weight = params.add(
            format!("{name}.weight"),
            init.fan_in_uniform(&[out_channels, in_channels, kernel], in_channels * kernel),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        x.expect_rank(2, "conv1d input")?;
        if x.dim(0) != self.in_channels {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {:?}",
                self.in_channels,
                x.shape()
            )));
        }
        Ok(x.dim(1))
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let len = self.check_input(x)?;
        let (k, pad) = (self.kernel, self.kernel / 2);
        let wt = params.value(self.weight).data();
        let b = params.value(self.bias).data();
        let src = x.data();
        let mut out = vec![0.0; self.out_channels * len];
        for co in 0..self.out_channels {
            for l in 0..len {
                let mut acc = b[co];
                for ci in 0..self.in_channels {
                    for j in 0..k {
                        let s = l as isize + j as isize - pad as isize;
                        if s >= 0 && (s as usize) < len {
                            acc += wt[(co * self.in_channels + ci) * k + j] * src[ci * len + s as usize];
                        }
                    }
                }
                out[co * len + l] = acc;
            }
        }
        Tensor::from_vec(&[self.out_channels, len], out)
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut GradBuffer,
    ) -> Result<Tensor> {
        let len = self.check_input(x)?;
        grad_out.expect_shape(&[self.out_channels, len], "conv1d grad")?;
        let (k, pad) = (self.kernel, self.kernel / 2);
        let wt = params.value(self.weight).data();
        let src = x.data();
        let g = grad_out.data();
        let mut gx = vec![0.0; self.in_channels * len];
        {
            let gw = grads.get_mut(self.weight).data_mut();
            for co in 0..self.out_channels {
                for l in 0..len {
                    let go = g[co * len + l];
                    for ci in 0..self.in_channels {
                        for j in 0..k {
                            let s = l as isize + j as isize - pad as isize;
                            if s >= 0 && (s as usize) < len {
                                let wi = (co * self.in_channels + ci) * k + j;
                                gw[wi] += go * src[ci * len + s as usize];
                                gx[ci * len + s as usize] += go * wt[wi];
                            }
                        }
                    }
                }
            }
        }
        for (gb, row) in grads.get_mut(self.bias).data_mut().iter_mut().zip(g.chunks_exact(len)) {
            *gb += row.iter().sum::<f64>();
        }
        Tensor::from_vec(&[self.in_channels, len], gx)
    }
}

/// Affine map `y = W·x + b` on vectors.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    pub fn new(
        params: &mut ParamSet,
        init: &mut Initializer,
        name: &str,
        in_features: usize,
        out_features: usize,
    ) -> Result<Self> {
        let weight = params.add(
            format!("{name}.weight"),
            init.fan_in_uniform(&[out_features, in_features], in_features),
        )?;
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[out_features]))?;
        Ok(Self {
            weight,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn forward(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        x.expect_shape(&[self.in_features], "dense input")?;
        let w = params.value(self.weight).data();
        let b = params.value(self.bias).data();
        Ok(Tensor::vector(
            (0..self.out_features)
                .map(|o| {
                    b[o] + w[o * self.in_features..(o + 1) * self.in_features]
                        .iter()
                        .zip(x.data())
                        .map(|(a, v)| a * v)
                        .sum::<f64>()
                })
                .collect(),
        ))
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut GradBuffer,
    ) -> Result<Tensor> {
        x.expect_shape(&[self.in_features], "dense input")?;
        grad_out.expect_shape(&[self.out_features], "dense grad")?;
        let w = params.value(self.weight).data();
        let g = grad_out.data();
        {
            let gw = grads.get_mut(self.weight).data_mut();
            for o in 0..self.out_features {
                for i in 0..self.in_features {
                    gw[o * self.in_features + i] += g[o] * x.data()[i];
                }
            }
        }
        for (gb, &go) in grads.get_mut(self.bias).data_mut().iter_mut().zip(g) {
            *gb += go;
        }
        Ok(Tensor::vector(
            (0..self.in_features)
                .map(|i| (0..self.out_features).map(|o| w[o * self.in_features + i] * g[o]).sum())
                .collect(),
        ))
    }
}
