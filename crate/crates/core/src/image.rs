//! RGB rasters on a floating `[0, 255]` scale.
//!
//! Samples are stored row-major as `(y, x, channel)`. Everything except
//! [`save_image`] accepts unquantized data; [`quantize`] is the single
//! rounding site before anything is written to disk.

use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use ::image::{DynamicImage, ImageFormat, ImageReader, RgbImage};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::InvalidImage(format!(
                "{width}x{height} image needs {} samples, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("sample {i} is not finite")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image with every sample set to `rgb[c]`.
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    let v = f(x, y, c);
                    assert!(v.is_finite(), "non-finite sample at ({x},{y},{c})");
                    data.push(v);
                }
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f64] {
        &self.data
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn is_quantized(&self) -> bool {
        self.first_unquantized().is_none()
    }

    fn first_unquantized(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|&v| !(0.0..=255.0).contains(&v) || v.fract() != 0.0)
    }
}

/// Face region in frame pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BoundingBox {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn whole(img: &Image) -> Self {
        Self::new(0, 0, img.width(), img.height())
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x.checked_add(self.w).is_some_and(|r| r <= width)
            && self.y.checked_add(self.h).is_some_and(|b| b <= height)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.fits(width, height) {
            Ok(())
        } else {
            Err(Error::BoxOutOfBounds {
                x: self.x,
                y: self.y,
                w: self.w,
                h: self.h,
                width,
                height,
            })
        }
    }

    /// Intersection with the frame; `None` when nothing of the box remains.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<Self> {
        let x0 = self.x.min(width);
        let y0 = self.y.min(height);
        let x1 = self.x.saturating_add(self.w).min(width);
        let y1 = self.y.saturating_add(self.h).min(height);
        (x1 > x0 && y1 > y0).then(|| Self::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Grows the box by `fraction` of its size on every side. The result may
    /// extend past the frame; clamp afterwards.
    pub fn expand(&self, fraction: f64) -> Self {
        if fraction <= 0.0 {
            return *self;
        }
        let mx = (self.w as f64 * fraction).round() as usize;
        let my = (self.h as f64 * fraction).round() as usize;
        let x = self.x.saturating_sub(mx);
        let y = self.y.saturating_sub(my);
        Self::new(
            x,
            y,
            self.x + self.w + mx - x,
            self.y + self.h + my - y,
        )
    }
}

pub fn crop(img: &Image, bbox: &BoundingBox) -> Result<Image> {
    bbox.check_within(img.width(), img.height())?;
    let mut data = Vec::with_capacity(bbox.w * bbox.h * CHANNELS);
    for y in bbox.y..bbox.y + bbox.h {
        let start = img.index(bbox.x, y, 0);
        data.extend_from_slice(&img.data[start..start + bbox.w * CHANNELS]);
    }
    Ok(Image {
        width: bbox.w,
        height: bbox.h,
        data,
    })
}

pub fn paste(dst: &Image, patch: &Image, bbox: &BoundingBox) -> Result<Image> {
    if patch.dims() != (bbox.w, bbox.h) {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} patch", bbox.w, bbox.h),
            actual: format!("{}x{}", patch.width(), patch.height()),
        });
    }
    bbox.check_within(dst.width(), dst.height())?;
    let mut out = dst.clone();
    let row = bbox.w * CHANNELS;
    for py in 0..bbox.h {
        let d = out.index(bbox.x, bbox.y + py, 0);
        let s = patch.index(0, py, 0);
        out.data[d..d + row].copy_from_slice(&patch.data[s..s + row]);
    }
    Ok(out)
}

/// Clamps every sample to `[0, 255]` and rounds half away from zero.
pub fn quantize(img: &Image) -> Image {
    let data = img
        .data
        .iter()
        .map(|&v| {
            assert!(!v.is_nan(), "NaN sample reached quantize");
            v.clamp(0.0, 255.0).round()
        })
        .collect();
    Image {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Decodes a PNG or JPEG into RGB. Grayscale is replicated, alpha dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = ::image::guess_format(&bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("unsupported format {format:?}"),
        });
    }
    let decoded = ImageReader::with_format(Cursor::new(bytes), format)
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let rgb = to_rgb8(decoded).ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        reason: "unsupported color type".into(),
    })?;
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f64::from).collect();
    Image::new(w as usize, h as usize, data)
}

fn to_rgb8(img: DynamicImage) -> Option<RgbImage> {
    match img {
        DynamicImage::ImageRgb8(rgb) => Some(rgb),
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgba8(_) => Some(img.to_rgb8()),
        // 16-bit PNGs are out of scope
        _ => None,
    }
}

/// Writes an 8-bit RGB PNG. The image must already be quantized.
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    if let Some(index) = img.first_unquantized() {
        return Err(Error::NotQuantized {
            index,
            value: img.data[index],
        });
    }
    let raw: Vec<u8> = img.data.iter().map(|&v| v as u8).collect();
    let buf = RgbImage::from_raw(img.width as u32, img.height as u32, raw)
        .expect("sample count checked at construction");
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    buf.write_to(&mut writer, ImageFormat::Png)
        .map_err(|e| Error::Encode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}
