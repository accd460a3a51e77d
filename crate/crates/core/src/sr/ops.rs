use rayon::prelude::*;

use super::tensor::Tensor3;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;

/// 3x3 convolution with `out x in x 3 x 3` weights and one bias per output.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    out_channels: usize,
    in_channels: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    pub fn new(out_channels: usize, in_channels: usize, weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Shape("conv layer with zero channels".into()));
        }
        let expected = out_channels * in_channels * KERNEL * KERNEL;
        if weights.len() != expected {
            return Err(Error::Shape(format!(
                "{out_channels}x{in_channels}x3x3 conv needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv with {out_channels} outputs needs {out_channels} biases, got {}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite weight".into()));
        }
        Ok(Self {
            out_channels,
            in_channels,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels * KERNEL * KERNEL],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, dy: usize, dx: usize) -> f32 {
        self.weights[((o * self.in_channels + i) * KERNEL + dy) * KERNEL + dx]
    }
}

/// Same-size 3x3 convolution with zero padding of one pixel.
///
/// Each output plane is accumulated in `f64`, bias first, then over input
/// channel, kernel row and kernel column in that order. Output channels are
/// computed in parallel; the per-sample summation order does not depend on
/// the thread count.
pub fn conv2d(x: &Tensor3, layer: &ConvLayer) -> Result<Tensor3> {
    if x.channels() != layer.in_channels {
        return Err(Error::Shape(format!(
            "conv expects {} input channels, tensor has {}",
            layer.in_channels,
            x.channels()
        )));
    }
    let (h, w) = (x.height(), x.width());
    let planes: Vec<Vec<f32>> = (0..layer.out_channels)
        .into_par_iter()
        .map(|o| conv_plane(x, layer, o))
        .collect();
    let data = planes.concat();
    Ok(Tensor3::from_parts(layer.out_channels, h, w, data))
}

fn conv_plane(x: &Tensor3, layer: &ConvLayer, o: usize) -> Vec<f32> {
    let (h, w) = (x.height(), x.width());
    let mut acc = vec![f64::from(layer.bias[o]); h * w];
    for i in 0..layer.in_channels {
        let plane = x.plane(i);
        for dy in 0..KERNEL {
            // output rows whose source row y + dy - 1 lies inside the image
            let y0 = 1usize.saturating_sub(dy);
            let y1 = (h + 1).saturating_sub(dy).min(h);
            for dx in 0..KERNEL {
                let wv = f64::from(layer.weight(o, i, dy, dx));
                let x0 = 1usize.saturating_sub(dx);
                let x1 = (w + 1).saturating_sub(dx).min(w);
                if x0 >= x1 {
                    continue;
                }
                for oy in y0..y1 {
                    let sy = oy + dy - 1;
                    let src = &plane[sy * w + x0 + dx - 1..sy * w + x1 + dx - 1];
                    let dst = &mut acc[oy * w + x0..oy * w + x1];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wv * f64::from(s);
                    }
                }
            }
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

pub fn relu(x: &Tensor3) -> Tensor3 {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor3::from_parts(x.channels(), x.height(), x.width(), data)
}

/// `x + res_scale * conv2(relu(conv1(x)))`
pub fn residual_block(x: &Tensor3, conv1: &ConvLayer, conv2: &ConvLayer, res_scale: f32) -> Result<Tensor3> {
    let branch = conv2d(&relu(&conv2d(x, conv1)?), conv2)?;
    if branch.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "residual branch produces {:?}, block input is {:?}",
            branch.shape(),
            x.shape()
        )));
    }
    let scale = f64::from(res_scale);
    let data = x
        .data()
        .iter()
        .zip(branch.data())
        .map(|(&a, &b)| (f64::from(a) + scale * f64::from(b)) as f32)
        .collect();
    Ok(Tensor3::from_parts(x.channels(), x.height(), x.width(), data))
}

/// Rearranges `(c * r^2, h, w)` into `(c, h * r, w * r)`.
pub fn pixel_shuffle(x: &Tensor3, r: usize) -> Result<Tensor3> {
    let rr = r * r;
    if r == 0 || !x.channels().is_multiple_of(rr) {
        return Err(Error::Shape(format!(
            "pixel shuffle by {r} needs channels divisible by {rr}, got {}",
            x.channels()
        )));
    }
    let (c_in, h, w) = x.shape();
    let c_out = c_in / rr;
    let (oh, ow) = (h * r, w * r);
    let mut data = vec![0.0f32; c_out * oh * ow];
    for c in 0..c_out {
        for dy in 0..r {
            for dx in 0..r {
                let src = x.plane(c * rr + dy * r + dx);
                for y in 0..h {
                    let row = (c * oh + y * r + dy) * ow;
                    for xx in 0..w {
                        data[row + xx * r + dx] = src[y * w + xx];
                    }
                }
            }
        }
    }
    Ok(Tensor3::from_parts(c_out, oh, ow, data))
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor3, r: usize) -> Result<Tensor3> {
    let (c, oh, ow) = x.shape();
    if r == 0 || oh % r != 0 || ow % r != 0 {
        return Err(Error::Shape(format!(
            "pixel unshuffle by {r} needs spatial dims divisible by {r}, got {oh}x{ow}"
        )));
    }
    let (h, w) = (oh / r, ow / r);
    let rr = r * r;
    let mut data = vec![0.0f32; c * rr * h * w];
    for ci in 0..c {
        for dy in 0..r {
            for dx in 0..r {
                let base = (ci * rr + dy * r + dx) * h * w;
                for y in 0..h {
                    for xx in 0..w {
                        data[base + y * w + xx] = x.get(ci, y * r + dy, xx * r + dx);
                    }
                }
            }
        }
    }
    Ok(Tensor3::from_parts(c * rr, h, w, data))
}
