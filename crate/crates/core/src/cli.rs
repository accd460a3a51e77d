//! The `srattack` command line.
//!
//! Exit codes: 0 success, 1 validation findings, 2 usage error, 3 I/O or
//! format error.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attack::{self, AttackConfig, Backend, Overwrite};
use crate::error::Error;
use crate::eval::{self, Setup};
use crate::manifest::{self, ForgeryMethod, Split, SplitSpec, ValidateOptions};
use crate::provenance::{run_manifest_path, sha256_file, RunManifest};
use crate::quality;
use crate::resample::ScaleFactor;
use crate::sr::{load_weights, SrModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const ATTACK_LOG_NAME: &str = "attack_log.csv";
pub const PAIRS_NAME: &str = "pairs.csv";
pub const REPORT_NAME: &str = "report.csv";

const RESAMPLER_DESCRIPTION: &str =
    "downscale: cubic convolution a=-0.5, kernel stretched by k, edge clamp; pad: half-sample reflect";

#[derive(Debug, Parser)]
#[command(name = "srattack", version, about = "Super-resolution face attack and detector evaluation")]
struct Cli {
    /// Seed for every random choice (required by `manifest build`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: logical cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or validate experiment manifests.
    #[command(subcommand)]
    Manifest(ManifestCommand),
    /// Apply the SR attack to every face in a manifest.
    Attack(AttackArgs),
    /// Mean SSIM/PSNR per group over (original, attacked) pairs.
    Similarity(SimilarityArgs),
    /// Detector metrics, ROC and AUC from score files.
    Evaluate(EvaluateArgs),
    /// Inspect SR weight files.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Subcommand)]
enum ManifestCommand {
    Build(BuildArgs),
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Frame root with `pristine/<video>/` and `<Method>/<video>/` folders.
    #[arg(long)]
    frames: PathBuf,
    /// Split JSON: {"train": [...], "test": [...]}.
    #[arg(long)]
    split: PathBuf,
    /// Forgery method (Deepfakes, Face2Face, FaceShifter, FaceSwap, NeuralTextures).
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = manifest::DEFAULT_FRAMES_PER_VIDEO)]
    frames_per_video: usize,
    /// Face-box sidecar CSV (`path,x,y,w,h`).
    #[arg(long)]
    boxes: Option<PathBuf>,
    /// Output manifest (default: `<frames>/manifest.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Data root for path checks (default: the manifest's directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Treat entries without a face box as violations.
    #[arg(long)]
    require_boxes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Edsr,
    Bicubic,
}

#[derive(Debug, Args)]
struct AttackArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, value_enum)]
    backend: BackendArg,
    /// SRW1 weight file (required for `--backend edsr`).
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Data root (default: the manifest's directory).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Grow each face box by this fraction of its size on every side.
    #[arg(long, default_value_t = 0.0)]
    margin: f64,
    /// Replace existing outputs instead of failing.
    #[arg(long)]
    overwrite: bool,
    /// Record SSIM/PSNR of each frame against its attacked version.
    #[arg(long)]
    log_similarity: bool,
}

#[derive(Debug, Args)]
struct SimilarityArgs {
    /// CSV with `original,attacked,group` columns.
    #[arg(long)]
    pairs: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SetupArg {
    Both,
    FakeOnly,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    scores_plain: PathBuf,
    #[arg(long)]
    scores_attacked: PathBuf,
    #[arg(long, value_enum)]
    setup: SetupArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = eval::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Detector name recorded in the report.
    #[arg(long, default_value = "detector")]
    model_tag: String,
    /// Restrict to one split (train or test).
    #[arg(long)]
    split: Option<String>,
}

#[derive(Debug, Subcommand)]
enum ModelCommand {
    Inspect {
        #[arg(long)]
        weights: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type CliResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the subcommand.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(j);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_IO;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `srattack --help` for usage");
            EXIT_USAGE
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_IO
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Manifest(ManifestCommand::Build(a)) => manifest_build(cli, a),
        Command::Manifest(ManifestCommand::Validate(a)) => manifest_validate(a),
        Command::Attack(a) => attack(cli, a),
        Command::Similarity(a) => similarity(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Model(ModelCommand::Inspect { weights }) => model_inspect(weights),
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>, Error> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn absolute(path: &Path) -> Result<PathBuf, Error> {
    std::path::absolute(path).map_err(|e| Error::io(path, e))
}

fn manifest_build(cli: &Cli, a: &BuildArgs) -> CliResult {
    let seed = cli
        .seed
        .ok_or_else(|| Failure::Usage("manifest build needs --seed".into()))?;
    let method: ForgeryMethod = a.method.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    if method == ForgeryMethod::None {
        return Err(Failure::Usage("--method must name a forgery method".into()));
    }
    let split = SplitSpec::read(&a.split)?;
    let mut entries = manifest::build_manifest(&a.frames, &split, method, a.frames_per_video, seed)?;
    if let Some(b) = &a.boxes {
        manifest::attach_boxes(&mut entries, &manifest::read_boxes(b)?);
    }
    let out = a.out.clone().unwrap_or_else(|| a.frames.join("manifest.csv"));
    manifest::write_manifest(&entries, create_file(&out)?)?;

    let mut rm = RunManifest::new("manifest build");
    rm.set("jobs", cli.jobs);
    rm.set("frames", &a.frames)
        .set("split", &a.split)
        .set("method", method.as_str())
        .set("frames_per_video", a.frames_per_video)
        .set("seed", seed)
        .set("boxes", &a.boxes)
        .set("out", &out)
        .set("entries", entries.len());
    rm.write(&run_manifest_path(&out, false))?;

    let train = entries.iter().filter(|e| e.split == Split::Train).count();
    println!(
        "{} entries ({train} train, {} test) -> {}",
        entries.len(),
        entries.len() - train,
        out.display()
    );
    Ok(EXIT_OK)
}

fn manifest_validate(a: &ValidateArgs) -> CliResult {
    let entries = manifest::read_manifest(&a.manifest)?;
    let root = a.root.clone().unwrap_or_else(|| parent_dir(&a.manifest));
    let report = manifest::validate_manifest(
        &entries,
        &ValidateOptions {
            root: Some(&root),
            require_boxes: a.require_boxes,
        },
    );
    println!(
        "{} entries, box presence {:.1}%, {} violation(s)",
        report.entries,
        100.0 * report.box_presence_rate,
        report.violations.len()
    );
    for v in &report.violations {
        println!("  {v}");
    }
    Ok(if report.is_clean() { EXIT_OK } else { EXIT_FINDINGS })
}

fn attack(cli: &Cli, a: &AttackArgs) -> CliResult {
    let k = ScaleFactor::new(a.k).map_err(|e| Failure::Usage(e.to_string()))?;
    if !(a.margin >= 0.0 && a.margin.is_finite()) {
        return Err(Failure::Usage("--margin must be a non-negative number".into()));
    }
    let (backend, model, digest): (Backend, Option<SrModel>, Option<String>) = match a.backend {
        BackendArg::Bicubic => {
            if a.weights.is_some() {
                return Err(Failure::Usage("--weights is only used with --backend edsr".into()));
            }
            (Backend::Bicubic, None, None)
        }
        BackendArg::Edsr => {
            let w = a
                .weights
                .clone()
                .ok_or_else(|| Failure::Usage("--backend edsr needs --weights".into()))?;
            let model = load_weights(&w)?;
            if model.scale() != k {
                return Err(Failure::Usage(format!(
                    "{} upscales by {}, but --k is {k}",
                    w.display(),
                    model.scale()
                )));
            }
            let digest = sha256_file(&w)?;
            (Backend::Edsr { weights: w }, Some(model), Some(digest))
        }
    };

    let entries = manifest::read_manifest(&a.manifest)?;
    let root = absolute(&a.root.clone().unwrap_or_else(|| parent_dir(&a.manifest)))?;
    let log_path = a.out.join(ATTACK_LOG_NAME);
    let overwrite = if a.overwrite { Overwrite::Allow } else { Overwrite::Deny };
    if overwrite == Overwrite::Deny && log_path.exists() {
        return Err(Error::OutputExists(log_path).into());
    }
    create_dir(&a.out)?;

    let cfg = AttackConfig {
        k,
        backend: backend.clone(),
        output_dir: a.out.clone(),
        overwrite,
        margin: a.margin,
        log_similarity: a.log_similarity,
    };
    let records = attack::attack_batch(&entries, &root, &cfg, model.as_ref())?;
    attack::write_attack_log(&records, create_file(&log_path)?)?;
    attack::write_pairs(&records, &root, create_file(&a.out.join(PAIRS_NAME))?)?;

    let skipped = records.iter().filter(|r| r.is_skipped()).count();
    let mut rm = RunManifest::new("attack");
    rm.set("jobs", cli.jobs);
    rm.set("manifest", &a.manifest)
        .set("root", &root)
        .set("out", &a.out)
        .set("k", k.get())
        .set("backend", backend.name())
        .set("weights", a.weights.as_ref())
        .set("weights_sha256", digest)
        .set("resampler", RESAMPLER_DESCRIPTION)
        .set("margin", a.margin)
        .set("overwrite", a.overwrite)
        .set("log_similarity", a.log_similarity)
        .set("seed", cli.seed)
        .set("entries", records.len())
        .set("skipped", skipped);
    if let Some(m) = &model {
        rm.set(
            "model",
            serde_json::json!({
                "scale": m.scale().get(),
                "n_feats": m.n_feats(),
                "n_resblocks": m.n_resblocks(),
                "res_scale": m.res_scale(),
                "rgb_mean": m.rgb_mean(),
            }),
        );
    }
    rm.write(&run_manifest_path(&a.out, true))?;
    println!(
        "attacked {} of {} frames ({skipped} skipped) -> {}",
        records.len() - skipped,
        records.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn similarity(cli: &Cli, a: &SimilarityArgs) -> CliResult {
    let pairs = quality::read_pairs(&a.pairs)?;
    let rows = quality::similarity_report(&pairs)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    quality::write_similarity_csv(&rows, create_file(&a.out)?)?;
    let mut rm = RunManifest::new("similarity");
    rm.set("jobs", cli.jobs);
    rm.set("pairs", &a.pairs)
        .set("out", &a.out)
        .set("pair_count", pairs.len())
        .set("seed", cli.seed)
        .set("ssim", "global statistics, channels pooled, C1=(0.01*255)^2, C2=(0.03*255)^2");
    rm.write(&run_manifest_path(&a.out, false))?;
    for r in &rows {
        let psnr = r.psnr_mean_db.map_or_else(|| "inf".to_string(), |v| format!("{v:.1}"));
        println!("{:<15} n={:<6} SSIM {:.3}  PSNR {psnr} dB", r.group, r.pair_count, r.ssim_mean);
    }
    Ok(EXIT_OK)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Failure::Usage("--threshold must lie in [0, 1]".into()));
    }
    let split: Option<Split> = a
        .split
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let setup = match a.setup {
        SetupArg::Both => Setup::AttackBoth,
        SetupArg::FakeOnly => Setup::AttackFakeOnly,
    };
    let mut entries = manifest::read_manifest(&a.manifest)?;
    if let Some(s) = split {
        entries.retain(|e| e.split == s);
    }
    let plain = eval::read_scores(&a.scores_plain)?;
    let attacked = eval::read_scores(&a.scores_attacked)?;
    let evals = eval::evaluate_setup(&entries, &plain, &attacked, setup, a.threshold, &a.model_tag)?;

    create_dir(&a.out)?;
    let rows: Vec<_> = evals.iter().map(|e| e.row.clone()).collect();
    eval::write_report_csv(&rows, create_file(&a.out.join(REPORT_NAME))?)?;
    for e in &evals {
        eval::write_roc_csv(&e.roc, create_file(&a.out.join(eval::roc_file_name(&e.row)))?)?;
    }
    let mut rm = RunManifest::new("evaluate");
    rm.set("jobs", cli.jobs);
    rm.set("manifest", &a.manifest)
        .set("scores_plain", &a.scores_plain)
        .set("scores_attacked", &a.scores_attacked)
        .set("setup", setup.to_string())
        .set("threshold", a.threshold)
        .set("tie_rule", "score >= threshold is fake")
        .set("model_tag", &a.model_tag)
        .set("split", &a.split)
        .set("seed", cli.seed)
        .set("out", &a.out);
    rm.write(&run_manifest_path(&a.out, true))?;
    print!("{}", eval::format_table(&rows));
    Ok(EXIT_OK)
}

fn model_inspect(weights: &Path) -> CliResult {
    let m = load_weights(weights)?;
    let mean = m.rgb_mean();
    println!("file:        {}", weights.display());
    println!("sha256:      {}", sha256_file(weights)?);
    println!("scale:       {}", m.scale());
    println!("n_feats:     {}", m.n_feats());
    println!("n_resblocks: {}", m.n_resblocks());
    println!("res_scale:   {}", m.res_scale());
    println!("rgb_mean:    {} {} {}", mean[0], mean[1], mean[2]);
    println!("layers:      {}", m.layers().len());
    println!("parameters:  {}", m.parameter_count());
    Ok(EXIT_OK)
}
