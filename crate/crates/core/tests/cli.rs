mod common;

use std::fs;
use std::path::Path;

use common::{code, run_cli};

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(code(&run_cli(&["--help"])), 0);
    assert_eq!(code(&run_cli(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run_cli(&["attack", "--bogus"])), 2);
    assert_eq!(code(&run_cli(&[])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("m.csv");
    fs::write(&m, "path,label,method,split,video_id,frame_idx,box_x,box_y,box_w,box_h\n").unwrap();
    let out = tmp.path().join("o");
    // edsr needs weights
    assert_eq!(code(&run_cli(&["attack", "--manifest", s(&m), "--backend", "edsr", "--out", s(&out)])), 2);
    // bicubic takes none
    assert_eq!(
        code(&run_cli(&["attack", "--manifest", s(&m), "--backend", "bicubic", "--weights", "w", "--out", s(&out)])),
        2
    );
    assert_eq!(code(&run_cli(&["attack", "--manifest", s(&m), "--backend", "bicubic", "--k", "5", "--out", s(&out)])), 2);
    assert_eq!(code(&run_cli(&["--jobs", "0", "model", "inspect", "--weights", "w"])), 2);
    // manifest build without a seed
    assert_eq!(
        code(&run_cli(&["manifest", "build", "--frames", ".", "--split", "s.json", "--method", "Deepfakes"])),
        2
    );
}

#[test]
fn model_inspect_reports_architecture() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("m.srw");
    srattack::sr::write_weights(&common::random_model(&mut common::rng(3), 3, 4, 2), &w).unwrap();
    let out = run_cli(&["model", "inspect", "--weights", s(&w)]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["scale", "3", "n_feats", "n_resblocks", "res_scale", "parameters"] {
        assert!(text.contains(needle), "{needle} missing from:\n{text}");
    }
    fs::write(&w, b"SRW0").unwrap();
    assert_eq!(code(&run_cli(&["model", "inspect", "--weights", s(&w)])), 3);
}

#[test]
fn end_to_end_with_findings_and_shared_fpr() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = common::make_dataset(&tmp.path().join("d"), 2, 3, 6);
    let m = tmp.path().join("manifest.csv");
    let out = run_cli(&[
        "--seed", "1", "manifest", "build", "--frames", s(&ds.root), "--split", s(&ds.split), "--method",
        "FaceSwap", "--boxes", s(&ds.boxes), "--out", s(&m),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("manifest.csv.run.json").exists());

    // clean without the box requirement, violations with it
    assert_eq!(code(&run_cli(&["manifest", "validate", "--manifest", s(&m), "--root", s(&ds.root)])), 0);
    assert_eq!(
        code(&run_cli(&["manifest", "validate", "--manifest", s(&m), "--root", s(&ds.root), "--require-boxes"])),
        1
    );

    let atk = tmp.path().join("atk");
    let args = ["attack", "--manifest", s(&m), "--root", s(&ds.root), "--backend", "bicubic", "--out", s(&atk)];
    assert_eq!(code(&run_cli(&args)), 0);
    assert!(atk.join("attack_log.csv").exists() && atk.join("run_manifest.json").exists());
    // a second run would overwrite
    assert_eq!(code(&run_cli(&args)), 3);

    let sim = tmp.path().join("sim.csv");
    assert_eq!(code(&run_cli(&["similarity", "--pairs", s(&atk.join("pairs.csv")), "--out", s(&sim)])), 0);
    assert!(fs::read_to_string(&sim).unwrap().starts_with("group,pair_count,ssim_mean,psnr_mean_db,infinite_psnr_count\n"));

    let entries = srattack::manifest::read_manifest(&m).unwrap();
    let mut plain = String::from("image_path,score\n");
    let mut attacked = String::from("image_path,score\n");
    for (i, e) in entries.iter().enumerate() {
        let fake = e.path.starts_with("FaceSwap");
        plain.push_str(&format!("{},{}\n", e.path, if fake { 0.6 } else { 0.3 } + (i % 5) as f64 * 0.05));
        attacked.push_str(&format!("{},{}\n", e.path, if fake { 0.4 } else { 0.7 }));
    }
    fs::write(tmp.path().join("p.csv"), plain).unwrap();
    fs::write(tmp.path().join("a.csv"), attacked).unwrap();
    let ev = tmp.path().join("ev");
    let out = run_cli(&[
        "evaluate", "--manifest", s(&m), "--scores-plain", s(&tmp.path().join("p.csv")), "--scores-attacked",
        s(&tmp.path().join("a.csv")), "--setup", "fake-only", "--split", "test", "--out", s(&ev),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(ev.join("report.csv")).unwrap();
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][8], rows[1][8], "fpr differs:\n{report}");
    assert!(ev.join("roc_detector_FaceSwap_sr.csv").exists());
    assert!(ev.join("roc_detector_FaceSwap_nosr.csv").exists());
}
