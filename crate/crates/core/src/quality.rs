//! Image similarity: MSE, PSNR, global SSIM, and Pearson correlation.
//!
//! SSIM here is the single-window form: one mean, variance and covariance
//! over every sample of both images (channels pooled), with population
//! (`1/N`) statistics and the usual stability constants for `L = 255`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::image::{load_image, Image};

pub const MAX_VALUE: f64 = 255.0;
pub const C1: f64 = (0.01 * MAX_VALUE) * (0.01 * MAX_VALUE);
pub const C2: f64 = (0.03 * MAX_VALUE) * (0.03 * MAX_VALUE);

/// Compensated summation; results do not drift with the number of terms.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut k = KahanSum::default();
        iter.into_iter().for_each(|v| k.add(v));
        k
    }
}

fn check_dims(x: &Image, y: &Image) -> Result<()> {
    if x.dims() != y.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", x.width(), x.height()),
            actual: format!("{}x{}", y.width(), y.height()),
        });
    }
    Ok(())
}

pub fn mse(x: &Image, y: &Image) -> Result<f64> {
    check_dims(x, y)?;
    let n = x.samples().len() as f64;
    let sum: f64 = x
        .samples()
        .iter()
        .zip(y.samples())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n)
}

/// PSNR in dB for a given MSE; `f64::INFINITY` when `mse == 0`.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (MAX_VALUE * MAX_VALUE / mse).log10()
    }
}

/// PSNR in dB; identical images give `f64::INFINITY`.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimComponents {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_xy: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SsimComponents {
    pub fn ssim(&self) -> f64 {
        let num = (2.0 * self.mu_x * self.mu_y + self.c1) * (2.0 * self.sigma_xy + self.c2);
        let den = (self.mu_x * self.mu_x + self.mu_y * self.mu_y + self.c1)
            * (self.sigma_x * self.sigma_x + self.sigma_y * self.sigma_y + self.c2);
        num / den
    }
}

pub fn ssim_components(x: &Image, y: &Image) -> Result<SsimComponents> {
    check_dims(x, y)?;
    let (xs, ys) = (x.samples(), y.samples());
    let n = xs.len() as f64;
    let mu_x = xs.iter().sum::<f64>() / n;
    let mu_y = ys.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in xs.iter().zip(ys) {
        let (da, db) = (a - mu_x, b - mu_y);
        vx += da * da;
        vy += db * db;
        cxy += da * db;
    }
    Ok(SsimComponents {
        mu_x,
        mu_y,
        sigma_x: (vx / n).sqrt(),
        sigma_y: (vy / n).sqrt(),
        sigma_xy: cxy / n,
        c1: C1,
        c2: C2,
    })
}

pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    if x == y {
        return Ok(1.0);
    }
    Ok(ssim_components(x, y)?.ssim())
}

/// Pearson correlation with population statistics. Errors when either
/// sequence is constant.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} values", a.len()),
            actual: format!("{} values", b.len()),
        });
    }
    if a.len() < 2 {
        return Err(Error::Undefined("correlation needs at least two values".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// One (original, attacked) image pair and the group it is reported under.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SimilarityPair {
    pub original: PathBuf,
    pub attacked: PathBuf,
    pub group: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSimilarity {
    pub group: String,
    pub pair_count: usize,
    pub ssim_mean: f64,
    /// Mean over pairs with finite PSNR; `None` when every pair was identical.
    pub psnr_mean_db: Option<f64>,
    pub infinite_psnr_count: usize,
}

pub fn score_pair(original: &Image, attacked: &Image) -> Result<PairScore> {
    Ok(PairScore {
        ssim: ssim(original, attacked)?,
        psnr: psnr(original, attacked)?,
    })
}

/// Per-group means, groups in lexicographic order.
pub fn aggregate<'a>(scores: impl IntoIterator<Item = (&'a str, PairScore)>) -> Result<Vec<GroupSimilarity>> {
    #[derive(Default)]
    struct Acc {
        n: usize,
        ssim: KahanSum,
        psnr: KahanSum,
        finite: usize,
        infinite: usize,
    }
    let mut groups: BTreeMap<&str, Acc> = BTreeMap::new();
    for (g, s) in scores {
        let acc = groups.entry(g).or_default();
        acc.n += 1;
        acc.ssim.add(s.ssim);
        if s.psnr.is_finite() {
            acc.psnr.add(s.psnr);
            acc.finite += 1;
        } else {
            acc.infinite += 1;
        }
    }
    if groups.is_empty() {
        return Err(Error::Empty("no image pairs to aggregate".into()));
    }
    Ok(groups
        .into_iter()
        .map(|(g, a)| GroupSimilarity {
            group: g.to_string(),
            pair_count: a.n,
            ssim_mean: a.ssim.total() / a.n as f64,
            psnr_mean_db: (a.finite > 0).then(|| a.psnr.total() / a.finite as f64),
            infinite_psnr_count: a.infinite,
        })
        .collect())
}

/// Loads every pair, scores it and aggregates per group.
pub fn similarity_report(pairs: &[SimilarityPair]) -> Result<Vec<GroupSimilarity>> {
    let scores: Vec<PairScore> = pairs
        .par_iter()
        .map(|p| {
            let a = load_image(&p.original)?;
            let b = load_image(&p.attacked)?;
            score_pair(&a, &b).map_err(|e| match e {
                Error::DimensionMismatch { expected, actual } => Error::format(
                    &p.attacked,
                    format!("size {actual} differs from original {expected}"),
                ),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    aggregate(pairs.iter().map(|p| p.group.as_str()).zip(scores))
}

/// Reads a `original,attacked,group` CSV. Relative paths are resolved
/// against the CSV's directory.
pub fn read_pairs(path: &Path) -> Result<Vec<SimilarityPair>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let mut p: SimilarityPair = row.map_err(|e| Error::format(path, e.to_string()))?;
        p.original = base.join(&p.original);
        p.attacked = base.join(&p.attacked);
        out.push(p);
    }
    Ok(out)
}

pub fn write_similarity_csv<W: Write>(rows: &[GroupSimilarity], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["group", "pair_count", "ssim_mean", "psnr_mean_db", "infinite_psnr_count"])?;
    for r in rows {
        w.write_record([
            r.group.clone(),
            r.pair_count.to_string(),
            r.ssim_mean.to_string(),
            r.psnr_mean_db.map_or_else(|| "inf".to_string(), |v| v.to_string()),
            r.infinite_psnr_count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("similarity csv", e))?;
    Ok(())
}
