//! `SRW1` weight files.
//!
//! Little-endian layout:
//!
//! ```text
//! "SRW1"              magic
//! u32 version         = 1
//! u32 scale
//! u32 n_feats
//! u32 n_resblocks
//! f32 res_scale
//! f32[3] rgb_mean     RGB, [0, 255] scale
//! u32 layer_count
//! per layer:
//!   u32 out, u32 in, u32 kh, u32 kw
//!   f32[out * in * kh * kw] weights (out, in, kh, kw order)
//!   f32[out] biases
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::model::SrModel;
use super::ops::{ConvLayer, KERNEL};
use crate::error::{Error, Result};
use crate::resample::ScaleFactor;

pub const MAGIC: [u8; 4] = *b"SRW1";
pub const VERSION: u32 = 1;

// guards against absurd headers before allocating
const MAX_CHANNELS: u32 = 1 << 16;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| Error::InvalidModel(format!("{what}: size overflow")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses an `SRW1` image already in memory.
pub fn read_weights(bytes: &[u8]) -> Result<SrModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let scale = ScaleFactor::new(r.u32("scale")?)?;
    let n_feats = r.u32("n_feats")?;
    let n_resblocks = r.u32("n_resblocks")?;
    if n_feats == 0 || n_feats > MAX_CHANNELS || n_resblocks > MAX_CHANNELS {
        return Err(Error::InvalidModel(format!(
            "implausible header: n_feats={n_feats}, n_resblocks={n_resblocks}"
        )));
    }
    let res_scale = r.f32("res_scale")?;
    let rgb_mean = [r.f32("rgb_mean")?, r.f32("rgb_mean")?, r.f32("rgb_mean")?];
    let layer_count = r.u32("layer_count")? as usize;
    let expected = super::model::layer_shapes(scale, n_feats as usize, n_resblocks as usize);
    if layer_count != expected.len() {
        return Err(Error::InvalidModel(format!(
            "header declares {layer_count} layers, x{scale} with {n_resblocks} blocks needs {}",
            expected.len()
        )));
    }

    // the shape chain is checked once every declared layer has been read, so
    // a short payload surfaces as truncation
    let mut layers = Vec::with_capacity(layer_count);
    for idx in 0..layer_count {
        let what = |field: &str| format!("layer {idx} {field}");
        let out = r.u32(&what("header"))?;
        let inp = r.u32(&what("header"))?;
        let kh = r.u32(&what("header"))?;
        let kw = r.u32(&what("header"))?;
        if kh as usize != KERNEL || kw as usize != KERNEL {
            return Err(Error::InvalidModel(format!(
                "layer {idx}: kernel {kh}x{kw}, only 3x3 is supported"
            )));
        }
        if out == 0 || inp == 0 || out > MAX_CHANNELS * 16 || inp > MAX_CHANNELS {
            return Err(Error::InvalidModel(format!(
                "layer {idx}: implausible shape {out}x{inp}"
            )));
        }
        let (out, inp) = (out as usize, inp as usize);
        let weights = r.f32s(out * inp * KERNEL * KERNEL, &what("weights"))?;
        let bias = r.f32s(out, &what("biases"))?;
        if let Some(pos) = weights.iter().chain(&bias).position(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "layer {idx}: non-finite value at parameter {pos}"
            )));
        }
        layers.push(ConvLayer::new(out, inp, weights, bias)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::InvalidModel(format!(
            "{} trailing bytes after last layer",
            bytes.len() - r.pos
        )));
    }
    SrModel::new(
        scale,
        n_feats as usize,
        n_resblocks as usize,
        res_scale,
        rgb_mean,
        layers,
    )
}

pub fn load_weights(path: &Path) -> Result<SrModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_weights(&bytes)
}

pub fn encode_weights(model: &SrModel) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + 4 * model.parameter_count());
    buf.extend_from_slice(&MAGIC);
    let put_u32 = |buf: &mut Vec<u8>, v: u32| buf.extend_from_slice(&v.to_le_bytes());
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, model.scale().get());
    put_u32(&mut buf, model.n_feats() as u32);
    put_u32(&mut buf, model.n_resblocks() as u32);
    buf.extend_from_slice(&model.res_scale().to_le_bytes());
    for m in model.rgb_mean() {
        buf.extend_from_slice(&m.to_le_bytes());
    }
    put_u32(&mut buf, model.layers().len() as u32);
    for layer in model.layers() {
        put_u32(&mut buf, layer.out_channels() as u32);
        put_u32(&mut buf, layer.in_channels() as u32);
        put_u32(&mut buf, KERNEL as u32);
        put_u32(&mut buf, KERNEL as u32);
        for v in layer.weights().iter().chain(layer.bias()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn write_weights(model: &SrModel, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_weights(model))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> SrModel {
        let scale = ScaleFactor::new(2).unwrap();
        let layers = super::super::model::layer_shapes(scale, 2, 2)
            .into_iter()
            .enumerate()
            .map(|(li, (o, i))| {
                let w = (0..o * i * 9).map(|j| ((li * 31 + j) % 17) as f32 * 0.125 - 1.0).collect();
                let b = (0..o).map(|j| j as f32 * 0.5).collect();
                ConvLayer::new(o, i, w, b).unwrap()
            })
            .collect();
        SrModel::new(scale, 2, 2, 0.1, [114.4, 111.5, 103.0], layers).unwrap()
    }

    #[test]
    fn round_trip() {
        let m = sample_model();
        assert_eq!(read_weights(&encode_weights(&m)).unwrap(), m);
    }

    #[test]
    fn bad_magic() {
        let mut b = encode_weights(&sample_model());
        b[0] = b'X';
        assert!(matches!(read_weights(&b), Err(Error::BadMagic(_))));
    }

    #[test]
    fn bad_version() {
        let mut b = encode_weights(&sample_model());
        b[4] = 2;
        assert!(matches!(read_weights(&b), Err(Error::Version(2))));
    }

    #[test]
    fn missing_block_is_truncation() {
        // header says two blocks but only one block's tensors follow
        let m1 = SrModel::zeros(ScaleFactor::new(2).unwrap(), 2, 1, 1.0, [0.0; 3]);
        let mut b = encode_weights(&m1);
        b[16..20].copy_from_slice(&2u32.to_le_bytes());
        let count = m1.layers().len() as u32 + 2;
        b[36..40].copy_from_slice(&count.to_le_bytes());
        assert!(matches!(read_weights(&b), Err(Error::Truncated(_))));

        let full = encode_weights(&sample_model());
        let cut = &full[..full.len() - 10];
        assert!(matches!(read_weights(cut), Err(Error::Truncated(_))));
    }

    #[test]
    fn non_finite_weight() {
        let mut b = encode_weights(&sample_model());
        // first weight of the head layer
        let off = 40 + 16;
        b[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(read_weights(&b), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn trailing_bytes() {
        let mut b = encode_weights(&sample_model());
        b.push(0);
        assert!(read_weights(&b).is_err());
    }

    #[test]
    fn unsupported_scale_in_header() {
        let mut b = encode_weights(&sample_model());
        b[8..12].copy_from_slice(&5u32.to_le_bytes());
        assert!(matches!(read_weights(&b), Err(Error::UnsupportedScale(5))));
    }
}
