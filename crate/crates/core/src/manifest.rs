//! Experiment manifests, split files and face-box sidecars.
//!
//! A frame root is laid out as `<root>/pristine/<video_id>/<frame>` for
//! pristine videos and `<root>/<Method>/<video_id>/<frame>` for each
//! forgery method. Manifest paths are stored relative to that root with
//! `/` separators.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::BoundingBox;

pub const PRISTINE_DIR: &str = "pristine";
pub const DEFAULT_FRAMES_PER_VIDEO: usize = 10;
const FRAME_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Pristine,
    Fake,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Pristine => "pristine",
            Label::Fake => "fake",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pristine" => Ok(Label::Pristine),
            "fake" => Ok(Label::Fake),
            other => Err(Error::Config(format!("unknown label {other:?}"))),
        }
    }
}

/// Forgery method of a fake image; `None` for pristine images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ForgeryMethod {
    Deepfakes,
    Face2Face,
    FaceShifter,
    FaceSwap,
    NeuralTextures,
    None,
}

impl ForgeryMethod {
    pub const FORGERIES: [ForgeryMethod; 5] = [
        ForgeryMethod::Deepfakes,
        ForgeryMethod::Face2Face,
        ForgeryMethod::FaceShifter,
        ForgeryMethod::FaceSwap,
        ForgeryMethod::NeuralTextures,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeryMethod::Deepfakes => "Deepfakes",
            ForgeryMethod::Face2Face => "Face2Face",
            ForgeryMethod::FaceShifter => "FaceShifter",
            ForgeryMethod::FaceSwap => "FaceSwap",
            ForgeryMethod::NeuralTextures => "NeuralTextures",
            ForgeryMethod::None => "none",
        }
    }
}

impl fmt::Display for ForgeryMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForgeryMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::FORGERIES
            .into_iter()
            .chain([ForgeryMethod::None])
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown forgery method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub label: Label,
    pub method: ForgeryMethod,
    pub split: Split,
    pub video_id: String,
    pub frame_idx: u64,
    pub bbox: Option<BoundingBox>,
}

impl ManifestEntry {
    pub fn new(
        path: impl Into<String>,
        method: ForgeryMethod,
        split: Split,
        video_id: impl Into<String>,
        frame_idx: u64,
    ) -> Self {
        let label = if method == ForgeryMethod::None {
            Label::Pristine
        } else {
            Label::Fake
        };
        Self {
            path: path.into(),
            label,
            method,
            split,
            video_id: video_id.into(),
            frame_idx,
            bbox: None,
        }
    }

    /// Group key used in similarity reports: the method name, or
    /// `pristine`.
    pub fn group(&self) -> &'static str {
        match self.method {
            ForgeryMethod::None => PRISTINE_DIR,
            m => m.as_str(),
        }
    }

    fn check(&self) -> Result<()> {
        if (self.label == Label::Pristine) != (self.method == ForgeryMethod::None) {
            return Err(Error::Config(format!(
                "{}: label {} does not match method {}",
                self.path, self.label, self.method
            )));
        }
        Ok(())
    }
}

/// Train and test video ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() || self.test.is_empty() {
            return Err(Error::Config("split needs non-empty train and test sets".into()));
        }
        let train: BTreeSet<&String> = self.train.iter().collect();
        if let Some(v) = self.test.iter().find(|v| train.contains(v)) {
            return Err(Error::Config(format!("video {v} is in both train and test")));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SplitSpec =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn is_frame(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Frame number from the trailing digits of the file stem.
fn frame_number(name: &str) -> Option<u64> {
    let stem = Path::new(name).file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn list_frames(dir: &Path) -> Result<Vec<String>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let p = entry.path();
        if p.is_file() && is_frame(&p) {
            if let Some(n) = p.file_name().and_then(|n| n.to_str()) {
                names.push(n.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Per-(class, video) generator derived from the run seed, so sampling does
/// not depend on the order videos are visited in.
fn video_rng(seed: u64, class_dir: &str, video: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(class_dir.as_bytes());
    h.update([0]);
    h.update(video.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Samples `frames_per_video` frames per video and class without
/// replacement. Videos with fewer frames contribute all of them.
pub fn build_manifest(
    root: &Path,
    split: &SplitSpec,
    method: ForgeryMethod,
    frames_per_video: usize,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    split.validate()?;
    if method == ForgeryMethod::None {
        return Err(Error::Config("manifest needs a forgery method".into()));
    }
    if frames_per_video == 0 {
        return Err(Error::Config("frames per video must be positive".into()));
    }
    let mut entries = Vec::new();
    let videos = split
        .train
        .iter()
        .map(|v| (Split::Train, v))
        .chain(split.test.iter().map(|v| (Split::Test, v)));
    for (which, video) in videos {
        for (class_dir, m) in [(PRISTINE_DIR, ForgeryMethod::None), (method.as_str(), method)] {
            let dir = root.join(class_dir).join(video);
            if !dir.is_dir() {
                return Err(Error::format(&dir, "video directory missing"));
            }
            let frames = list_frames(&dir)?;
            let chosen: Vec<usize> = if frames.len() <= frames_per_video {
                if frames.len() < frames_per_video {
                    log::warn!(
                        "{}: {} frames, fewer than {frames_per_video}; taking all",
                        dir.display(),
                        frames.len()
                    );
                }
                (0..frames.len()).collect()
            } else {
                let mut rng = video_rng(seed, class_dir, video);
                let mut idx =
                    rand::seq::index::sample(&mut rng, frames.len(), frames_per_video).into_vec();
                idx.sort_unstable();
                idx
            };
            for i in chosen {
                let name = &frames[i];
                let frame_idx = frame_number(name).unwrap_or(i as u64);
                entries.push(ManifestEntry::new(
                    format!("{class_dir}/{video}/{name}"),
                    m,
                    which,
                    video.clone(),
                    frame_idx,
                ));
            }
        }
    }
    sort_entries(&mut entries);
    Ok(entries)
}

/// Canonical order: video id, frame index, then pristine before fake.
pub fn sort_entries(entries: &mut [ManifestEntry]) {
    entries.sort_by(|a, b| {
        (&a.video_id, a.frame_idx, a.label, &a.path).cmp(&(&b.video_id, b.frame_idx, b.label, &b.path))
    });
}

/// Sets each entry's box from the sidecar table; entries without a row keep
/// no box.
pub fn attach_boxes(entries: &mut [ManifestEntry], boxes: &BTreeMap<String, BoundingBox>) {
    for e in entries {
        if let Some(b) = boxes.get(&e.path) {
            e.bbox = Some(*b);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Imbalance { split: String, pristine: usize, fake: usize },
    MissingFile { path: String },
    MissingBox { path: String },
    DuplicatePath { path: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Imbalance { split, pristine, fake } => {
                write!(f, "{split}: {pristine} pristine vs {fake} fake entries")
            }
            Violation::MissingFile { path } => write!(f, "missing file: {path}"),
            Violation::MissingBox { path } => write!(f, "no face box: {path}"),
            Violation::DuplicatePath { path } => write!(f, "duplicate entry: {path}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub entries: usize,
    pub box_presence_rate: f64,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidateOptions<'a> {
    /// Check that every path exists under this root.
    pub root: Option<&'a Path>,
    /// Report entries without a face box as violations.
    pub require_boxes: bool,
}

pub fn validate_manifest(entries: &[ManifestEntry], opts: &ValidateOptions<'_>) -> ValidationReport {
    let mut violations = Vec::new();
    let mut per_split: BTreeMap<Split, (usize, usize)> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for e in entries {
        let counts = per_split.entry(e.split).or_default();
        match e.label {
            Label::Pristine => counts.0 += 1,
            Label::Fake => counts.1 += 1,
        }
        if !seen.insert(&e.path) {
            violations.push(Violation::DuplicatePath { path: e.path.clone() });
        }
    }
    for (split, (p, f)) in &per_split {
        if p != f {
            violations.push(Violation::Imbalance {
                split: split.to_string(),
                pristine: *p,
                fake: *f,
            });
        }
    }
    if let Some(root) = opts.root {
        for e in entries {
            if !root.join(&e.path).is_file() {
                violations.push(Violation::MissingFile { path: e.path.clone() });
            }
        }
    }
    let with_box = entries.iter().filter(|e| e.bbox.is_some()).count();
    if opts.require_boxes {
        for e in entries.iter().filter(|e| e.bbox.is_none()) {
            violations.push(Violation::MissingBox { path: e.path.clone() });
        }
    }
    ValidationReport {
        entries: entries.len(),
        box_presence_rate: if entries.is_empty() {
            0.0
        } else {
            with_box as f64 / entries.len() as f64
        },
        violations,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
    method: String,
    split: String,
    video_id: String,
    frame_idx: u64,
    box_x: Option<usize>,
    box_y: Option<usize>,
    box_w: Option<usize>,
    box_h: Option<usize>,
}

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for e in entries {
        let b = e.bbox;
        w.serialize(ManifestRow {
            path: e.path.clone(),
            label: e.label.to_string(),
            method: e.method.to_string(),
            split: e.split.to_string(),
            video_id: e.video_id.clone(),
            frame_idx: e.frame_idx,
            box_x: b.map(|b| b.x),
            box_y: b.map(|b| b.y),
            box_w: b.map(|b| b.w),
            box_h: b.map(|b| b.h),
        })?;
    }
    if entries.is_empty() {
        w.write_record([
            "path", "label", "method", "split", "video_id", "frame_idx", "box_x", "box_y", "box_w", "box_h",
        ])?;
    }
    w.flush().map_err(|e| Error::io("manifest", e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut entries = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let ctx = |e: Error| Error::format(path, format!("line {line}: {e}"));
        let row = row.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let bbox = match (row.box_x, row.box_y, row.box_w, row.box_h) {
            (Some(x), Some(y), Some(w), Some(h)) => {
                if w == 0 || h == 0 {
                    return Err(ctx(Error::Config("box width and height must be positive".into())));
                }
                Some(BoundingBox::new(x, y, w, h))
            }
            (None, None, None, None) => None,
            _ => return Err(ctx(Error::Config("partially filled box".into()))),
        };
        let entry = ManifestEntry {
            path: row.path,
            label: row.label.parse().map_err(ctx)?,
            method: row.method.parse().map_err(ctx)?,
            split: row.split.parse().map_err(ctx)?,
            video_id: row.video_id,
            frame_idx: row.frame_idx,
            bbox,
        };
        entry.check().map_err(ctx)?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Reads a face-box sidecar: `path,x,y,w,h` per row, optional header.
pub fn read_boxes(path: &Path) -> Result<BTreeMap<String, BoundingBox>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut boxes = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if i == 0 && rec.get(0).is_some_and(|c| c.eq_ignore_ascii_case("path")) {
            continue;
        }
        if rec.len() != 5 {
            return Err(Error::format(path, format!("line {line}: expected 5 fields, got {}", rec.len())));
        }
        let mut nums = [0i64; 4];
        for (k, n) in nums.iter_mut().enumerate() {
            *n = rec[k + 1].parse().map_err(|_| {
                Error::format(path, format!("line {line}: {:?} is not an integer", &rec[k + 1]))
            })?;
        }
        let [x, y, w, h] = nums;
        if x < 0 || y < 0 || w <= 0 || h <= 0 {
            return Err(Error::format(
                path,
                format!("line {line}: invalid box ({x},{y},{w},{h})"),
            ));
        }
        let b = BoundingBox::new(x as usize, y as usize, w as usize, h as usize);
        if boxes.insert(rec[0].to_string(), b).is_some() {
            return Err(Error::format(
                path,
                format!("line {line}: second box for {}", &rec[0]),
            ));
        }
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_round_trip() {
        for m in ForgeryMethod::FORGERIES.into_iter().chain([ForgeryMethod::None]) {
            assert_eq!(m.to_string().parse::<ForgeryMethod>().unwrap(), m);
        }
        assert!("DeepFakes".parse::<ForgeryMethod>().is_err());
    }

    #[test]
    fn frame_numbers() {
        assert_eq!(frame_number("0042.png"), Some(42));
        assert_eq!(frame_number("frame_7.jpg"), Some(7));
        assert_eq!(frame_number("cover.png"), None);
    }

    #[test]
    fn split_validation() {
        let s = SplitSpec { train: vec!["1".into()], test: vec!["1".into()] };
        assert!(s.validate().is_err());
        let s = SplitSpec { train: vec![], test: vec!["1".into()] };
        assert!(s.validate().is_err());
    }

    #[test]
    fn validation_findings() {
        let mk = |p: &str, m| ManifestEntry::new(p, m, Split::Test, "000", 0);
        let mut entries: Vec<_> = (0..3).map(|i| mk(&format!("p{i}"), ForgeryMethod::None)).collect();
        entries.extend((0..2).map(|i| mk(&format!("f{i}"), ForgeryMethod::FaceSwap)));
        let r = validate_manifest(&entries, &ValidateOptions::default());
        assert_eq!(
            r.violations,
            vec![Violation::Imbalance { split: "test".into(), pristine: 3, fake: 2 }]
        );
        assert_eq!(r.box_presence_rate, 0.0);
        let r = validate_manifest(&entries[..1], &ValidateOptions { root: None, require_boxes: true });
        assert!(r.violations.contains(&Violation::MissingBox { path: "p0".into() }));
    }

    #[test]
    fn entry_invariant() {
        let mut e = ManifestEntry::new("a", ForgeryMethod::Face2Face, Split::Train, "1", 0);
        assert_eq!(e.label, Label::Fake);
        assert!(e.check().is_ok());
        e.label = Label::Pristine;
        assert!(e.check().is_err());
    }
}
