#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srattack::image::save_image;
use srattack::sr::{ConvLayer, SrModel};
use srattack::{Image, ScaleFactor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Integer-valued noise image.
pub fn noise_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _, _| f64::from(rng.gen_range(0u8..=255)))
}

/// Continuous-valued image on [0, 255].
pub fn float_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
    Image::from_fn(w, h, |_, _, _| rng.gen_range(0.0..255.0))
}

/// Random EDSR-topology model with small weights.
pub fn random_model(rng: &mut ChaCha8Rng, scale: u32, n_feats: usize, n_resblocks: usize) -> SrModel {
    let k = ScaleFactor::new(scale).unwrap();
    let zero = SrModel::zeros(k, n_feats, n_resblocks, 0.1, [114.4, 111.5, 103.0]);
    let layers = zero
        .layers()
        .iter()
        .map(|l| {
            let (o, i) = (l.out_channels(), l.in_channels());
            let w = (0..o * i * 9).map(|_| rng.gen_range(-0.2f32..0.2)).collect();
            let b = (0..o).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            ConvLayer::new(o, i, w, b).unwrap()
        })
        .collect();
    SrModel::new(k, n_feats, n_resblocks, 0.1, [114.4, 111.5, 103.0], layers).unwrap()
}

pub fn write_png(path: &Path, img: &Image) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    save_image(img, path).unwrap();
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_srattack")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("run srattack")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// A small frame tree: `n_videos` test videos, one forgery method, real PNG
/// frames with face boxes in a sidecar. Returns (root, split json, boxes csv).
pub struct Dataset {
    pub root: PathBuf,
    pub split: PathBuf,
    pub boxes: PathBuf,
}

pub fn make_dataset(dir: &Path, n_videos: usize, frames: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let root = dir.join("frames");
    let mut box_rows = String::from("path,x,y,w,h\n");
    let videos: Vec<String> = (0..n_videos).map(|v| format!("{v:03}")).collect();
    for class in ["pristine", "FaceSwap"] {
        for v in &videos {
            for f in 0..frames {
                let (w, h) = (r.gen_range(40..56), r.gen_range(36..50));
                let img = noise_image(&mut r, w, h);
                let rel = format!("{class}/{v}/{f:04}.png");
                write_png(&root.join(&rel), &img);
                let (bw, bh) = (r.gen_range(9..24), r.gen_range(9..24));
                let (bx, by) = (r.gen_range(0..w - bw), r.gen_range(0..h - bh));
                // every fourth frame of the first video has no detection
                if !(v == "000" && f % 4 == 3) {
                    box_rows.push_str(&format!("{rel},{bx},{by},{bw},{bh}\n"));
                }
            }
        }
    }
    let boxes = dir.join("boxes.csv");
    fs::write(&boxes, box_rows).unwrap();
    let split = dir.join("split.json");
    // one throwaway train video keeps the split valid; it must exist too
    for class in ["pristine", "FaceSwap"] {
        write_png(&root.join(format!("{class}/train0/0000.png")), &noise_image(&mut r, 8, 8));
    }
    fs::write(
        &split,
        serde_json::json!({ "train": ["train0"], "test": videos }).to_string(),
    )
    .unwrap();
    Dataset { root, split, boxes }
}

/// Collects every file under `dir` as (relative path, bytes), skipping run
/// manifests, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    fn walk(base: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                let name = p.file_name().unwrap().to_string_lossy();
                if name == "run_manifest.json" || name.ends_with(".run.json") {
                    continue;
                }
                let rel = p.strip_prefix(base).unwrap().to_string_lossy().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    walk(dir, dir, &mut out);
    out.sort();
    out
}
