//! Integer-factor resampling with the cubic convolution kernel.
//!
//! Both directions use the Keys kernel with `a = -0.5` and clamp sample
//! indices at the image border. Downscaling stretches the kernel by the
//! scale factor (antialiasing); upscaling evaluates it unstretched. The 2-D
//! transforms are separable: rows first, then columns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// Cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// Supported super-resolution factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct ScaleFactor(u32);

impl ScaleFactor {
    pub const X2: ScaleFactor = ScaleFactor(2);

    pub fn new(k: u32) -> Result<Self> {
        match k {
            2..=4 => Ok(Self(k)),
            _ => Err(Error::UnsupportedScale(k)),
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }
}

impl Default for ScaleFactor {
    fn default() -> Self {
        Self::X2
    }
}

impl TryFrom<u32> for ScaleFactor {
    type Error = Error;

    fn try_from(k: u32) -> Result<Self> {
        Self::new(k)
    }
}

impl From<ScaleFactor> for u32 {
    fn from(k: ScaleFactor) -> u32 {
        k.0
    }
}

impl std::fmt::Display for ScaleFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Columns added on the right and rows added at the bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PadSpec {
    pub right: usize,
    pub bottom: usize,
}

/// Cubic convolution kernel.
pub fn cubic(t: f64) -> f64 {
    let a = CUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Half-sample symmetric reflection of `i` into `0..n`.
fn reflect(i: usize, n: usize) -> usize {
    let m = i % (2 * n);
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Pads to the next multiple of `k` on the right and bottom edges by
/// mirroring the existing content.
pub fn pad_to_multiple(img: &Image, k: ScaleFactor) -> (Image, PadSpec) {
    let k = k.as_usize();
    let (w, h) = img.dims();
    let pw = w.div_ceil(k) * k;
    let ph = h.div_ceil(k) * k;
    let spec = PadSpec {
        right: pw - w,
        bottom: ph - h,
    };
    if spec == PadSpec::default() {
        return (img.clone(), spec);
    }
    let out = Image::from_fn(pw, ph, |x, y, c| img.get(reflect(x, w), reflect(y, h), c));
    (out, spec)
}

pub fn unpad(img: &Image, spec: PadSpec) -> Result<Image> {
    let (w, h) = img.dims();
    if spec.right >= w || spec.bottom >= h {
        return Err(Error::InvalidPad(format!(
            "cannot remove ({}, {}) from a {w}x{h} image",
            spec.right, spec.bottom
        )));
    }
    if spec == PadSpec::default() {
        return Ok(img.clone());
    }
    crate::image::crop(
        img,
        &crate::image::BoundingBox::new(0, 0, w - spec.right, h - spec.bottom),
    )
}

/// One output sample's taps: clamped source indices and their weights.
#[derive(Debug, Clone)]
pub(crate) struct Taps {
    pub(crate) index: Vec<usize>,
    pub(crate) weight: Vec<f64>,
}

/// Builds the per-output tap table for resampling an axis of `in_len`
/// samples to `out_len`. `stretch` widens the kernel (antialiasing).
pub(crate) fn taps(in_len: usize, out_len: usize, stretch: f64) -> Vec<Taps> {
    let ratio = in_len as f64 / out_len as f64;
    let support = 2.0 * stretch;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * ratio - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut index = Vec::with_capacity((hi - lo + 1) as usize);
            let mut weight = Vec::with_capacity(index.capacity());
            for j in lo..=hi {
                let w = cubic((j as f64 - center) / stretch);
                if w != 0.0 {
                    index.push(j.clamp(0, in_len as i64 - 1) as usize);
                    weight.push(w);
                }
            }
            let sum: f64 = weight.iter().sum();
            weight.iter_mut().for_each(|w| *w /= sum);
            let check: f64 = weight.iter().sum();
            assert!(
                (check - 1.0).abs() <= 1e-12,
                "resampling weights sum to {check}"
            );
            Taps { index, weight }
        })
        .collect()
}

fn resample(img: &Image, out_w: usize, out_h: usize, stretch: f64) -> Image {
    let (w, h) = img.dims();
    let tx = taps(w, out_w, stretch);
    let ty = taps(h, out_h, stretch);
    let src = img.samples();

    // horizontal pass: h rows of out_w pixels
    let mut rows = vec![0.0f64; h * out_w * CHANNELS];
    for y in 0..h {
        let src_row = &src[y * w * CHANNELS..(y + 1) * w * CHANNELS];
        let dst_row = &mut rows[y * out_w * CHANNELS..(y + 1) * out_w * CHANNELS];
        for (ox, t) in tx.iter().enumerate() {
            for c in 0..CHANNELS {
                // accumulate relative to the first tap so flat regions are exact
                let anchor = src_row[t.index[0] * CHANNELS + c];
                let mut acc = 0.0;
                for (&i, &wt) in t.index.iter().zip(&t.weight) {
                    acc += wt * (src_row[i * CHANNELS + c] - anchor);
                }
                dst_row[ox * CHANNELS + c] = anchor + acc;
            }
        }
    }

    let row_len = out_w * CHANNELS;
    let mut out = vec![0.0f64; out_h * row_len];
    for (oy, t) in ty.iter().enumerate() {
        let dst_row = &mut out[oy * row_len..(oy + 1) * row_len];
        let anchor = &rows[t.index[0] * row_len..(t.index[0] + 1) * row_len];
        for (&i, &wt) in t.index.iter().zip(&t.weight) {
            let src_row = &rows[i * row_len..(i + 1) * row_len];
            for ((d, s), a) in dst_row.iter_mut().zip(src_row).zip(anchor) {
                *d += wt * (s - a);
            }
        }
        for (d, a) in dst_row.iter_mut().zip(anchor) {
            *d += a;
        }
    }
    Image::new(out_w, out_h, out).expect("resampled image is well formed")
}

/// Antialiased cubic downscale by `1/k`. Both dimensions must be multiples
/// of `k` (see [`pad_to_multiple`]).
pub fn downscale(img: &Image, k: ScaleFactor) -> Result<Image> {
    let ku = k.as_usize();
    let (w, h) = img.dims();
    if w % ku != 0 || h % ku != 0 {
        return Err(Error::DimensionMismatch {
            expected: format!("dimensions divisible by {k}"),
            actual: format!("{w}x{h}"),
        });
    }
    Ok(resample(img, w / ku, h / ku, f64::from(k.get())))
}

/// Plain bicubic upscale by `k`. Output is not clamped.
pub fn upscale_bicubic(img: &Image, k: ScaleFactor) -> Image {
    let ku = k.as_usize();
    resample(img, img.width() * ku, img.height() * ku, 1.0)
}
