//! The face super-resolution attack.
//!
//! Per face: crop, pad to a multiple of `K`, downscale by `1/K`, upscale by
//! `K` (EDSR or bicubic), remove the padding, quantize, paste back. Pixels
//! outside the face box are never touched.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Component, Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{crop, load_image, paste, quantize, save_image, BoundingBox, Image};
use crate::manifest::ManifestEntry;
use crate::quality;
use crate::resample::{downscale, pad_to_multiple, unpad, upscale_bicubic, ScaleFactor};
use crate::sr::{forward, SrModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Edsr { weights: PathBuf },
    Bicubic,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::Edsr { .. } => "edsr",
            Backend::Bicubic => "bicubic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Overwrite {
    #[default]
    Deny,
    Allow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub k: ScaleFactor,
    pub backend: Backend,
    pub output_dir: PathBuf,
    pub overwrite: Overwrite,
    /// Box growth on every side, as a fraction of the box size.
    pub margin: f64,
    /// Compute SSIM/PSNR between each source frame and its attacked version.
    pub log_similarity: bool,
}

impl AttackConfig {
    pub fn new(backend: Backend, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            k: ScaleFactor::default(),
            backend,
            output_dir: output_dir.into(),
            overwrite: Overwrite::Deny,
            margin: 0.0,
            log_similarity: false,
        }
    }

    fn check_model(&self, model: Option<&SrModel>) -> Result<()> {
        match (&self.backend, model) {
            (Backend::Bicubic, None) => Ok(()),
            (Backend::Bicubic, Some(_)) => Err(Error::Config(
                "bicubic backend does not take a model".into(),
            )),
            (Backend::Edsr { .. }, None) => Err(Error::Config("edsr backend needs a model".into())),
            (Backend::Edsr { .. }, Some(m)) if m.scale() != self.k => Err(Error::Config(format!(
                "model upscales by {}, attack uses k = {}",
                m.scale(),
                self.k
            ))),
            (Backend::Edsr { .. }, Some(_)) => Ok(()),
        }
    }
}

/// Attacks the face at `bbox` and returns the full frame. The patch is
/// quantized; the rest of the frame is copied unchanged.
pub fn attack_face(frame: &Image, bbox: &BoundingBox, cfg: &AttackConfig, model: Option<&SrModel>) -> Result<Image> {
    cfg.check_model(model)?;
    let face = crop(frame, bbox)?;
    let (padded, pad) = pad_to_multiple(&face, cfg.k);
    let small = downscale(&padded, cfg.k)?;
    let restored = match model {
        Some(m) => forward(m, &small)?,
        None => upscale_bicubic(&small, cfg.k),
    };
    let patch = quantize(&unpad(&restored, pad)?);
    paste(frame, &patch, bbox)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackStatus {
    Ok,
    Skipped(String),
}

impl std::fmt::Display for AttackStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttackStatus::Ok => f.write_str("ok"),
            AttackStatus::Skipped(why) => write!(f, "skipped: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRecord {
    /// Manifest path of the source frame.
    pub source: String,
    /// Output path relative to the output directory.
    pub output: Option<String>,
    /// Box actually attacked, after margin and clamping.
    pub bbox: Option<BoundingBox>,
    pub backend: &'static str,
    pub k: ScaleFactor,
    pub ssim: Option<f64>,
    pub psnr: Option<f64>,
    pub status: AttackStatus,
    /// Similarity group: forgery method or `pristine`.
    pub group: &'static str,
}

impl AttackRecord {
    pub fn is_skipped(&self) -> bool {
        matches!(self.status, AttackStatus::Skipped(_))
    }
}

/// Output location for a manifest path: same relative layout, `.png`
/// extension.
pub fn output_relative_path(source: &str) -> Result<PathBuf> {
    let mut rel = PathBuf::new();
    for c in Path::new(source).components() {
        match c {
            Component::Normal(p) => rel.push(p),
            Component::CurDir | Component::RootDir | Component::Prefix(_) => {}
            Component::ParentDir => {
                return Err(Error::Config(format!("path {source} escapes the data root")))
            }
        }
    }
    if rel.as_os_str().is_empty() {
        return Err(Error::Config(format!("empty path {source:?}")));
    }
    Ok(rel.with_extension("png"))
}

fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Attacks every entry with a face box and writes one PNG per entry under
/// `cfg.output_dir`. Entries are processed in parallel; records come back in
/// manifest order. Entries without a usable box are skipped and reported.
pub fn attack_batch(
    entries: &[ManifestEntry],
    root: &Path,
    cfg: &AttackConfig,
    model: Option<&SrModel>,
) -> Result<Vec<AttackRecord>> {
    cfg.check_model(model)?;

    let mut outputs = Vec::with_capacity(entries.len());
    let mut taken = BTreeSet::new();
    for e in entries {
        let rel = output_relative_path(&e.path)?;
        if e.bbox.is_some() {
            let full = cfg.output_dir.join(&rel);
            if !taken.insert(rel.clone()) {
                return Err(Error::Config(format!(
                    "two manifest entries map to output {}",
                    full.display()
                )));
            }
            if cfg.overwrite == Overwrite::Deny && full.exists() {
                return Err(Error::OutputExists(full));
            }
        }
        outputs.push(rel);
    }

    entries
        .par_iter()
        .zip(outputs.par_iter())
        .map(|(e, rel)| attack_entry(e, rel, root, cfg, model))
        .collect()
}

fn attack_entry(
    e: &ManifestEntry,
    rel: &Path,
    root: &Path,
    cfg: &AttackConfig,
    model: Option<&SrModel>,
) -> Result<AttackRecord> {
    let mut record = AttackRecord {
        source: e.path.clone(),
        output: None,
        bbox: None,
        backend: cfg.backend.name(),
        k: cfg.k,
        ssim: None,
        psnr: None,
        status: AttackStatus::Ok,
        group: e.group(),
    };
    let Some(raw_box) = e.bbox else {
        log::warn!("{}: no face box, skipped", e.path);
        record.status = AttackStatus::Skipped("no face box".into());
        return Ok(record);
    };
    let frame = load_image(&root.join(&e.path))?;
    let Some(bbox) = raw_box.expand(cfg.margin).clamp_to(frame.width(), frame.height()) else {
        log::warn!("{}: face box lies outside the frame, skipped", e.path);
        record.status = AttackStatus::Skipped("box outside frame".into());
        return Ok(record);
    };
    let attacked = attack_face(&frame, &bbox, cfg, model)?;
    let out = cfg.output_dir.join(rel);
    if let Some(dir) = out.parent() {
        fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
    }
    save_image(&attacked, &out)?;
    if cfg.log_similarity {
        let s = quality::score_pair(&frame, &attacked)?;
        record.ssim = Some(s.ssim);
        record.psnr = Some(s.psnr);
    }
    record.output = Some(rel_string(rel));
    record.bbox = Some(bbox);
    Ok(record)
}

pub const LOG_HEADER: [&str; 11] = [
    "source", "output", "box_x", "box_y", "box_w", "box_h", "backend", "k", "ssim", "psnr", "status",
];

/// Attack log CSV, one row per record in manifest order.
pub fn write_attack_log<W: Write>(records: &[AttackRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(LOG_HEADER)?;
    let num = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
    let float = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.source.clone(),
            r.output.clone().unwrap_or_default(),
            num(r.bbox.map(|b| b.x)),
            num(r.bbox.map(|b| b.y)),
            num(r.bbox.map(|b| b.w)),
            num(r.bbox.map(|b| b.h)),
            r.backend.to_string(),
            r.k.to_string(),
            float(r.ssim),
            float(r.psnr),
            r.status.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("attack log", e))?;
    Ok(())
}

/// `original,attacked,group` rows for the attacked entries, readable by
/// [`quality::read_pairs`] when written into the output directory.
pub fn write_pairs<W: Write>(records: &[AttackRecord], root: &Path, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["original", "attacked", "group"])?;
    for r in records {
        if let Some(o) = &r.output {
            w.write_record([
                root.join(&r.source).to_string_lossy().as_ref(),
                o.as_str(),
                r.group,
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("pairs", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bicubic() -> AttackConfig {
        AttackConfig::new(Backend::Bicubic, "unused")
    }

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut s = seed;
        Image::from_fn(w, h, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % 256) as f64
        })
    }

    #[test]
    fn outside_box_untouched() {
        let frame = noise(64, 64, 1);
        let b = BoundingBox::new(16, 16, 32, 32);
        let out = attack_face(&frame, &b, &bicubic(), None).unwrap();
        assert_eq!(out.dims(), frame.dims());
        for y in 0..64 {
            for x in 0..64 {
                let inside = (16..48).contains(&x) && (16..48).contains(&y);
                for c in 0..3 {
                    if !inside {
                        assert_eq!(out.get(x, y, c).to_bits(), frame.get(x, y, c).to_bits());
                    } else {
                        let v = out.get(x, y, c);
                        assert!(v.fract() == 0.0 && (0.0..=255.0).contains(&v));
                    }
                }
            }
        }
        assert_ne!(out, frame);
    }

    #[test]
    fn constant_frame_survives() {
        let frame = Image::filled(20, 14, [40.0, 90.0, 200.0]);
        let out = attack_face(&frame, &BoundingBox::whole(&frame), &bicubic(), None).unwrap();
        assert_eq!(out, frame);
    }

    #[test]
    fn zero_model_paints_mean() {
        let frame = noise(40, 30, 7);
        let model = SrModel::zeros(ScaleFactor::X2, 4, 2, 0.1, [114.0, 111.0, 103.0]);
        let cfg = AttackConfig::new(Backend::Edsr { weights: "w.srw".into() }, "unused");
        let b = BoundingBox::new(5, 3, 17, 11);
        let out = attack_face(&frame, &b, &cfg, Some(&model)).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                let inside = (5..22).contains(&x) && (3..14).contains(&y);
                for c in 0..3 {
                    let expected = if inside { [114.0, 111.0, 103.0][c] } else { frame.get(x, y, c) };
                    assert_eq!(out.get(x, y, c), expected);
                }
            }
        }
    }

    #[test]
    fn backend_model_mismatch() {
        let frame = noise(8, 8, 3);
        let b = BoundingBox::whole(&frame);
        let x3 = SrModel::zeros(ScaleFactor::new(3).unwrap(), 2, 1, 1.0, [0.0; 3]);
        let edsr = AttackConfig::new(Backend::Edsr { weights: "w".into() }, "unused");
        assert!(matches!(attack_face(&frame, &b, &edsr, Some(&x3)), Err(Error::Config(_))));
        assert!(matches!(attack_face(&frame, &b, &edsr, None), Err(Error::Config(_))));
        assert!(matches!(attack_face(&frame, &b, &bicubic(), Some(&x3)), Err(Error::Config(_))));
        let bad = BoundingBox::new(4, 4, 8, 8);
        assert!(matches!(attack_face(&frame, &bad, &bicubic(), None), Err(Error::BoxOutOfBounds { .. })));
    }

    #[test]
    fn output_paths() {
        assert_eq!(output_relative_path("pristine/000/0001.jpg").unwrap(), PathBuf::from("pristine/000/0001.png"));
        assert_eq!(output_relative_path("/data/a.png").unwrap(), PathBuf::from("data/a.png"));
        assert!(output_relative_path("../a.png").is_err());
    }
}
