//! Detector evaluation from external score files.
//!
//! Fake is the positive class throughout: a false negative is a fake image
//! scored as pristine. A record is predicted fake when
//! `score >= threshold` (ties go to fake).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::manifest::{ForgeryMethod, Label, ManifestEntry};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    pub score: f64,
    pub label: Label,
    pub attacked: bool,
    pub method: ForgeryMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    pub fn total(&self) -> u64 {
        self.positives() + self.negatives()
    }
}

pub fn confusion_at_threshold(records: &[ScoreRecord], threshold: f64) -> Result<ConfusionCounts> {
    if records.is_empty() {
        return Err(Error::Empty("no score records".into()));
    }
    let mut c = ConfusionCounts::default();
    for r in records {
        let predicted_fake = r.score >= threshold;
        match (r.label, predicted_fake) {
            (Label::Fake, true) => c.tp += 1,
            (Label::Fake, false) => c.fn_ += 1,
            (Label::Pristine, true) => c.fp += 1,
            (Label::Pristine, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Threshold metrics as percentages. A rate whose denominator is zero is
/// `None`, never a silent zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub fn classification_metrics(c: &ConfusionCounts) -> Rates {
    let fnr = pct(c.fn_, c.positives());
    Rates {
        fnr,
        fpr: pct(c.fp, c.negatives()),
        // recall is derived from fnr so that recall + fnr == 100 exactly
        recall: fnr.map(|f| 100.0 - f),
        precision: pct(c.tp, c.tp + c.fp),
        accuracy: pct(c.tp + c.tn, c.total()),
    }
}

/// Rounds a percentage to one decimal, the precision of printed tables.
pub fn round1(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC over `(score, is_fake)` pairs: one point per distinct score, swept
/// from the highest down, starting at `(0, 0)` and ending at `(1, 1)`.
pub fn roc_from_scores(scored: &[(f64, bool)]) -> Result<Vec<RocPoint>> {
    let pos = scored.iter().filter(|s| s.1).count() as u64;
    let neg = scored.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined(format!(
            "ROC needs both classes ({pos} fake, {neg} pristine)"
        )));
    }
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

pub fn roc_curve(records: &[ScoreRecord]) -> Result<Vec<RocPoint>> {
    let scored: Vec<(f64, bool)> = records
        .iter()
        .map(|r| (r.score, r.label == Label::Fake))
        .collect();
    roc_from_scores(&scored)
}

/// Trapezoidal area under an ROC curve.
pub fn auc(curve: &[RocPoint]) -> Result<f64> {
    let valid = curve.len() >= 2
        && curve[0] == RocPoint { fpr: 0.0, tpr: 0.0 }
        && curve[curve.len() - 1] == RocPoint { fpr: 1.0, tpr: 1.0 }
        && curve
            .windows(2)
            .all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
    if !valid {
        return Err(Error::Undefined(
            "ROC curve must run monotonically from (0,0) to (1,1)".into(),
        ));
    }
    Ok(curve
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) / 2.0)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setup {
    /// Pristine and fake images are both attacked in the SR rows.
    AttackBoth,
    /// Only fake images are attacked; pristine scores always come from the
    /// plain file.
    AttackFakeOnly,
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" | "attack_both" => Ok(Self::AttackBoth),
            "fake-only" | "attack_fake_only" => Ok(Self::AttackFakeOnly),
            other => Err(Error::Config(format!("unknown setup {other:?}"))),
        }
    }
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AttackBoth => "both",
            Self::AttackFakeOnly => "fake-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub method: ForgeryMethod,
    pub sr: bool,
    pub counts: ConfusionCounts,
    pub rates: Rates,
    /// Percentage.
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub row: EvalRow,
    pub roc: Vec<RocPoint>,
}

/// Image path -> fake probability.
pub type ScoreTable = BTreeMap<String, f64>;

#[derive(Debug, Deserialize)]
struct ScoreRow {
    image_path: String,
    score: f64,
}

pub fn read_scores(path: &Path) -> Result<ScoreTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut table = ScoreTable::new();
    for (line, row) in rdr.deserialize::<ScoreRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(Error::format(
                path,
                format!("row {}: score {} outside [0, 1]", line + 2, row.score),
            ));
        }
        if table.insert(row.image_path.clone(), row.score).is_some() {
            return Err(Error::format(
                path,
                format!("duplicate score for {}", row.image_path),
            ));
        }
    }
    Ok(table)
}

fn lookup(table: &ScoreTable, entry: &ManifestEntry, which: &str) -> Result<f64> {
    if let Some(&s) = table.get(&entry.path) {
        return Ok(s);
    }
    // attacked outputs keep the manifest path with a .png extension
    let png = Path::new(&entry.path).with_extension("png");
    png.to_str()
        .and_then(|p| table.get(p).copied())
        .ok_or_else(|| Error::Config(format!("{which} scores have no entry for {}", entry.path)))
}

/// Builds one row per (forgery method, SR flag) under the given setup.
///
/// Each method's rows use that method's fake entries plus every pristine
/// entry of the manifest (deduplicated by path).
pub fn evaluate_setup(
    entries: &[ManifestEntry],
    plain: &ScoreTable,
    attacked: &ScoreTable,
    setup: Setup,
    threshold: f64,
    model: &str,
) -> Result<Vec<Evaluation>> {
    let mut seen = BTreeSet::new();
    let pristine: Vec<&ManifestEntry> = entries
        .iter()
        .filter(|e| e.label == Label::Pristine && seen.insert(e.path.as_str()))
        .collect();
    let methods: BTreeSet<ForgeryMethod> = entries
        .iter()
        .filter(|e| e.label == Label::Fake)
        .map(|e| e.method)
        .collect();
    if methods.is_empty() {
        return Err(Error::Empty("manifest has no fake entries".into()));
    }
    if pristine.is_empty() {
        return Err(Error::Empty("manifest has no pristine entries".into()));
    }

    let record = |e: &ManifestEntry, table: &ScoreTable, attacked_flag: bool, which: &str| {
        lookup(table, e, which).map(|score| ScoreRecord {
            id: e.path.clone(),
            score,
            label: e.label,
            attacked: attacked_flag,
            method: e.method,
        })
    };

    let mut out = Vec::new();
    for method in methods {
        let fakes: Vec<&ManifestEntry> = entries
            .iter()
            .filter(|e| e.label == Label::Fake && e.method == method)
            .collect();
        if fakes.len() != pristine.len() {
            log::warn!(
                "{method}: {} fake vs {} pristine entries (unbalanced)",
                fakes.len(),
                pristine.len()
            );
        }
        for sr in [false, true] {
            let mut records = Vec::with_capacity(fakes.len() + pristine.len());
            for e in &pristine {
                let use_attacked = sr && setup == Setup::AttackBoth;
                let (table, which) = if use_attacked { (attacked, "attacked") } else { (plain, "plain") };
                records.push(record(e, table, use_attacked, which)?);
            }
            for e in &fakes {
                let (table, which) = if sr { (attacked, "attacked") } else { (plain, "plain") };
                records.push(record(e, table, sr, which)?);
            }
            let counts = confusion_at_threshold(&records, threshold)?;
            let roc = roc_curve(&records)?;
            let area = auc(&roc)?;
            out.push(Evaluation {
                row: EvalRow {
                    model: model.to_string(),
                    method,
                    sr,
                    counts,
                    rates: classification_metrics(&counts),
                    auc: 100.0 * area,
                },
                roc,
            });
        }
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

pub const REPORT_HEADER: [&str; 13] = [
    "model", "method", "sr", "tp", "fp", "tn", "fn", "fnr", "fpr", "recall", "precision", "accuracy", "auc",
];

/// Full-precision report CSV.
pub fn write_report_csv<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.method.to_string(),
            r.sr.to_string(),
            r.counts.tp.to_string(),
            r.counts.fp.to_string(),
            r.counts.tn.to_string(),
            r.counts.fn_.to_string(),
            opt(r.rates.fnr),
            opt(r.rates.fpr),
            opt(r.rates.recall),
            opt(r.rates.precision),
            opt(r.rates.accuracy),
            r.auc.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("report csv", e))?;
    Ok(())
}

pub fn write_roc_csv<W: Write>(curve: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["fpr", "tpr"])?;
    for p in curve {
        w.write_record([p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("roc csv", e))?;
    Ok(())
}

/// File name for one ROC point file.
pub fn roc_file_name(row: &EvalRow) -> String {
    let tag: String = row
        .model
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("roc_{tag}_{}_{}.csv", row.method, if row.sr { "sr" } else { "nosr" })
}

/// Human-readable table with one-decimal percentages.
pub fn format_table(rows: &[EvalRow]) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "  n/a".to_string(), |v| format!("{:5.1}", round1(v)));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<12} {:<15} {:>3} {:>5} {:>5} {:>6} {:>9} {:>5} {:>8}",
        "model", "method", "SR", "FNR", "FPR", "Recall", "Precision", "AUC", "Accuracy"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:<15} {:>3} {} {} {:>6} {:>9} {:5.1} {:>8}",
            r.model,
            r.method.to_string(),
            if r.sr { "yes" } else { "no" },
            f(r.rates.fnr),
            f(r.rates.fpr),
            f(r.rates.recall),
            f(r.rates.precision),
            round1(r.auc),
            f(r.rates.accuracy),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(score: f64, fake: bool) -> ScoreRecord {
        ScoreRecord {
            id: String::new(),
            score,
            label: if fake { Label::Fake } else { Label::Pristine },
            attacked: false,
            method: if fake { ForgeryMethod::Deepfakes } else { ForgeryMethod::None },
        }
    }

    #[test]
    fn confusion_examples() {
        let c = confusion_at_threshold(&[rec(0.9, true), rec(0.1, false)], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 });
        let c = confusion_at_threshold(&[rec(0.5, true), rec(0.5, false)], 0.5).unwrap();
        assert_eq!((c.tp, c.fp), (1, 1));
        let all: Vec<_> = (0..7).map(|_| rec(0.6, false)).collect();
        let c = confusion_at_threshold(&all, 0.5).unwrap();
        assert_eq!((c.fp, c.tn), (7, 0));
        assert!(confusion_at_threshold(&[], 0.5).is_err());
    }

    #[test]
    fn metrics_examples() {
        let r = classification_metrics(&ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        for v in [r.fnr, r.fpr, r.recall, r.precision, r.accuracy] {
            assert_eq!(v, Some(50.0));
        }
        let r = classification_metrics(&ConfusionCounts { tp: 5, fp: 0, tn: 5, fn_: 0 });
        assert_eq!((r.fnr, r.fpr, r.accuracy), (Some(0.0), Some(0.0), Some(100.0)));
        let r = classification_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 0 });
        assert_eq!((r.fnr, r.recall, r.precision), (None, None, None));
        assert_eq!(r.fpr, Some(0.0));
    }

    #[test]
    fn roc_examples() {
        let sep = roc_from_scores(&[(0.9, true), (0.8, true), (0.2, false), (0.1, false)]).unwrap();
        assert!(sep.contains(&RocPoint { fpr: 0.0, tpr: 1.0 }));
        assert_eq!(auc(&sep).unwrap(), 1.0);

        let flat = roc_from_scores(&[(0.3, true), (0.3, false), (0.3, false)]).unwrap();
        assert_eq!(flat, vec![RocPoint { fpr: 0.0, tpr: 0.0 }, RocPoint { fpr: 1.0, tpr: 1.0 }]);
        assert_eq!(auc(&flat).unwrap(), 0.5);

        assert!(roc_from_scores(&[(0.3, true)]).is_err());
    }

    #[test]
    fn auc_rejects_malformed_curve() {
        let bad = [RocPoint { fpr: 0.0, tpr: 0.0 }, RocPoint { fpr: 0.5, tpr: 1.0 }];
        assert!(auc(&bad).is_err());
        let back = [
            RocPoint { fpr: 0.0, tpr: 0.0 },
            RocPoint { fpr: 0.5, tpr: 0.5 },
            RocPoint { fpr: 0.4, tpr: 0.6 },
            RocPoint { fpr: 1.0, tpr: 1.0 },
        ];
        assert!(auc(&back).is_err());
    }

    #[test]
    fn setup_parsing() {
        assert_eq!("both".parse::<Setup>().unwrap(), Setup::AttackBoth);
        assert_eq!("fake-only".parse::<Setup>().unwrap(), Setup::AttackFakeOnly);
        assert!("neither".parse::<Setup>().is_err());
    }

    #[test]
    fn table_rounds_to_one_decimal() {
        let counts = ConfusionCounts { tp: 1323, fp: 45, tn: 1355, fn_: 77 };
        let row = EvalRow {
            model: "resnet50".into(),
            method: ForgeryMethod::Deepfakes,
            sr: false,
            counts,
            rates: classification_metrics(&counts),
            auc: 99.2,
        };
        let t = format_table(&[row]);
        assert!(t.contains("  5.5   3.2   94.5      96.7  99.2     95.6"), "{t}");
    }
}
