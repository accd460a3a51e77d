//! Super-resolution face attack against deepfake detectors, and the
//! evaluation tooling around it.
//!
//! The attack replaces a detected face with a version of itself that was
//! downscaled by `1/K` and restored to its original size by a
//! super-resolution model, then pasted back into the frame. The crate
//! covers the whole batch workflow:
//!
//! - [`image`]: RGB rasters, crop/paste geometry, quantization, PNG/JPEG I/O
//! - [`resample`]: padding to a multiple of `K`, antialiased downscale and
//!   bicubic upscale
//! - [`sr`]: an EDSR-style inference engine and its `SRW1` weight format
//! - [`attack`]: the per-face pipeline and the batch driver
//! - [`quality`]: MSE, PSNR, global SSIM, Pearson correlation
//! - [`eval`]: confusion counts, rates, ROC/AUC and the two test setups
//! - [`manifest`]: dataset manifests, split files and face-box sidecars
//! - [`provenance`]: run manifests written next to every output
//! - [`cli`]: the `srattack` command line

pub mod attack;
pub mod cli;
pub mod error;
pub mod eval;
pub mod image;
pub mod manifest;
pub mod provenance;
pub mod quality;
pub mod resample;
pub mod sr;

pub use error::{Error, Result};
pub use crate::image::{BoundingBox, Image};
pub use resample::ScaleFactor;
