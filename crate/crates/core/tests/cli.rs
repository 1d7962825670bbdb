use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use woftkit::geometry::{Homography, Point2};
use woftkit::io::{format_correspondences, read_homographies, read_pose_trace};
use woftkit::estimators::CorrespondenceSet;
use woftkit::tracker::TrackStatus;

fn woftkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_woftkit"))
        .args(args)
        .env_remove("WOFTKIT_JOBS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for e in fs::read_dir(&p).unwrap() {
                stack.push(e.unwrap().path());
            }
        } else if !p.to_string_lossy().ends_with("manifest.json") {
            out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

fn synth(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synth", "--procedural", "--out", s(out)];
    if !extra.contains(&"--size") {
        args.extend(["--size", "96x72"]);
    }
    args.extend_from_slice(extra);
    woftkit(&args)
}

#[test]
fn synth_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = synth(out, &["--count", "2", "--length", "10", "--seed", "7"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for i in 0..2 {
        let seq = a.join(format!("seq_{i:03}"));
        let frames = fs::read_dir(&seq)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("0000"))
            .count();
        assert_eq!(frames, 10);
        assert_eq!(read_homographies(&seq.join("gt.txt")).unwrap().len(), 10);
        assert!(seq.join("mask.png").is_file());
    }
    assert!(a.join("manifest.json").is_file());
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn synth_rejects_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = synth(&dir.path().join("x"), &["--corner-frac", "0.6"]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    let o = woftkit(&["synth", "--src-dir", s(&dir.path().join("missing")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn track_then_eval_clean_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    assert_eq!(code(&synth(&root, &["--length", "12", "--seed", "3"])), 0);
    let seq = root.join("seq_000");
    let o = woftkit(&["track", "--seq", s(&seq)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read_pose_trace(&seq.join("trace.txt")).unwrap();
    assert_eq!(trace.len(), 12);
    assert!(trace.iter().all(|r| r.status == TrackStatus::Tracking));
    assert!(seq.join("trace.txt.manifest.json").is_file());

    let out = dir.path().join("eval");
    let o = woftkit(&["eval", "--seq", s(&seq), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("P@5") && stdout.contains("P@15"));
    let csv = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert!(csv.starts_with("sequence,P@5,P@15\n"));
    assert!(csv.contains("seq_000,1.0000,1.0000"));
    assert!(out.join("curve.csv").is_file() && out.join("eval.json").is_file());
}

#[test]
fn eval_gt_against_itself_and_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    assert_eq!(code(&synth(&root, &["--length", "6", "--seed", "4"])), 0);
    let seq = root.join("seq_000");
    let gt = read_homographies(&seq.join("gt.txt")).unwrap();
    let line = |i: usize, h: &Homography| format!("{i} tracking 1 {}\n", woftkit::io::format_homography(h));
    let full: String = gt.iter().enumerate().map(|(i, h)| line(i, h.as_ref().unwrap())).collect();
    fs::write(seq.join("gt_trace.txt"), &full).unwrap();
    let out = dir.path().join("e");
    let o = woftkit(&["eval", "--seq", s(&seq), "--trace", "gt_trace.txt", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(out.join("eval.csv")).unwrap().contains("seq_000,1.0000,1.0000"));

    let short: String = full.lines().take(4).map(|l| format!("{l}\n")).collect();
    fs::write(seq.join("short.txt"), short).unwrap();
    let o = woftkit(&["eval", "--seq", s(&seq), "--trace", "short.txt", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn track_with_missing_flow_files_names_the_frame() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    assert_eq!(code(&synth(&root, &["--length", "4"])), 0);
    let flow_dir = dir.path().join("flow");
    fs::create_dir_all(&flow_dir).unwrap();
    let seq = root.join("seq_000");
    let o = woftkit(&["track", "--seq", s(&seq), "--flow", "file", "--flow-dir", s(&flow_dir)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("frame 1"));
    let o = woftkit(&["track", "--seq", s(&seq), "--flow", "file"]);
    assert_eq!(code(&o), 2);
    let o = woftkit(&["track", "--seq", s(&seq), "--lost-ratio", "1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn prewarp_modes_give_distinct_traces() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    assert_eq!(code(&synth(&root, &["--length", "40", "--seed", "5", "--size", "160x120"])), 0);
    let seq = root.join("seq_000");
    let mut traces = Vec::new();
    for mode in ["never", "controlled"] {
        let out = dir.path().join(format!("{mode}.txt"));
        let o = woftkit(&["track", "--seq", s(&seq), "--prewarp", mode, "--flow-model", "ablation", "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        traces.push(fs::read(&out).unwrap());
    }
    assert_ne!(traces[0], traces[1]);
}

#[test]
fn estimate_recovers_a_known_homography() {
    let dir = tempfile::tempdir().unwrap();
    let h = Homography::from_row_major(&[1.02, 0.03, 4.0, -0.02, 0.98, -3.0, 1e-5, 2e-5, 1.0]).unwrap();
    let src: Vec<Point2> = (0..30).map(|i| Point2::new((i * 37 % 300) as f64, (i * 53 % 200) as f64)).collect();
    let dst: Vec<Point2> = src.iter().map(|&p| h.warp_point(p).unwrap()).collect();
    let c = CorrespondenceSet::from_points(&src, &dst).unwrap();
    let input = dir.path().join("c.txt");
    fs::write(&input, format!("# exact pairs\n{}", format_correspondences(&c))).unwrap();
    let out = dir.path().join("h.txt");
    for est in ["lsq", "weighted_lsq", "irls", "ransac"] {
        let o = woftkit(&["estimate", "--input", s(&input), "--estimator", est, "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{est}: {}", String::from_utf8_lossy(&o.stderr));
        let got = read_homographies(&out).unwrap()[0].unwrap();
        assert!(got.max_abs_diff(&h) < 1e-6, "{est}");
    }
    assert!(dir.path().join("h.txt.manifest.json").is_file());
    let o = woftkit(&["estimate", "--input", s(&dir.path().join("nope.txt"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_subset_and_degenerate_file() {
    let a = woftkit(&["gradcheck", "--instances", "5", "--seed", "3"]);
    let b = woftkit(&["gradcheck", "--instances", "5", "--seed", "3"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("5 checked"));

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("line.txt");
    let text: String = (0..10).map(|i| format!("{i} {} {i} {} 0.5\n", 2 * i, 2 * i)).collect();
    fs::write(&input, text).unwrap();
    let o = woftkit(&["gradcheck", "--input", s(&input)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("skipped"));
}

#[test]
fn quick_ablation_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let o = woftkit(&["ablate", "--quick", "--count", "1", "--length", "20", "--no-check", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "estimator,weights,pre_warp,p_at_5,p_at_15");
    assert_eq!(lines.len(), 13);
    assert!(out.join("ablation.json").is_file());
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("s");
    assert_eq!(code(&synth(&root, &["--length", "8", "--seed", "9"])), 0);
    let seq = root.join("seq_000");
    assert_eq!(code(&woftkit(&["track", "--seq", s(&seq), "--flow-model", "contaminated"])), 0);
    let o = woftkit(&["replay", "--manifest", s(&seq.join("trace.txt.manifest.json")), "--verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = woftkit(&["replay", "--manifest", s(&root.join("manifest.json")), "--verify"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("identical"));
}

#[test]
fn jobs_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = Command::new(env!("CARGO_BIN_EXE_woftkit"))
        .args(["synth", "--procedural", "--size", "64x48", "--count", "3", "--length", "3", "--out", s(&a)])
        .env("WOFTKIT_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(code(&synth(&b, &["--size", "64x48", "--count", "3", "--length", "3"])), 0);
    assert_eq!(tree(&a), tree(&b));
}
