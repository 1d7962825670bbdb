//! The `woftkit` command line. Every subcommand writes a manifest next to
//! its outputs; `replay` re-runs one. Exit codes: 0 success, 1 runtime or
//! I/O failure, 2 usage or configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::autodiff::gradcheck::{
    check_instance, run_random, summarize, GradcheckConfig, GradcheckInstance, GradcheckSummary, InstanceOutcome, Stencil,
};
use crate::bench::{ablation_csv, ablation_violations, run_ablation, FlowModel, SequenceSuiteSpec, WeightKind};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorChoice, EstimatorConfig};
use crate::eval::{aggregate, curve_csv, evaluate_poses, NamedReport};
use crate::flow::{FileFlowProvider, FlowProvider, LkFlowProvider};
use crate::geometry::Homography;
use crate::io::{
    format_homography, read_correspondences, read_homographies, read_image, read_mask, read_pose_trace, write_atomic,
    write_pose_trace, write_sequence_streaming, SequenceDir, GT_FILE, MASK_FILE,
};
use crate::seeds::sub_seed;
use crate::synth::{DegradeMethod, PairSpec, SequencePlan};
use crate::tracker::{track_frames, PreWarpMode, TrackStatus, TrackerConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "woftkit", version, about = "Planar tracking by weighted least-squares homographies over optical flow")]
pub struct Cli {
    /// Worker threads for sequence-level parallelism.
    #[arg(long, global = true, env = "WOFTKIT_JOBS", default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic sequences with ground truth.
    Synth(SynthArgs),
    /// Track a sequence directory and write a pose trace.
    Track(TrackArgs),
    /// Score pose traces against ground truth.
    Eval(EvalArgs),
    /// Estimator × pre-warp ablation on a seeded synthetic suite.
    Ablate(AblateArgs),
    /// Compare analytic weight gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Fit one homography to a correspondence file.
    Estimate(EstimateArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    /// Directory of source images, used in sorted order.
    #[arg(long, conflicts_with = "procedural", required_unless_present = "procedural")]
    pub src_dir: Option<PathBuf>,
    /// Use generated textures instead of source images.
    #[arg(long)]
    pub procedural: bool,
    #[arg(long, default_value_t = 100)]
    pub length: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0.2)]
    pub corner_frac: f64,
    #[arg(long, default_value_t = 20.0)]
    pub blur_max: f64,
    #[arg(long, default_value_t = 25)]
    pub quality: u8,
    #[arg(long, value_enum, default_value_t)]
    pub degrade: DegradeMethod,
    /// Corner random-walk speed.
    #[arg(long, default_value_t = 0.5)]
    pub motion: f64,
    /// Frame size for procedural textures, `WxH`.
    #[arg(long, default_value = "320x240", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FlowSource {
    /// Ground-truth flow from `gt.txt`, degraded per `--flow-model`.
    Synthetic,
    /// Pyramidal Lucas–Kanade.
    Lk,
    /// Precomputed `.flo` files in `--flow-dir`.
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FlowModelKind {
    Clean,
    Contaminated,
    Ablation,
}

impl FlowModelKind {
    pub fn model(self) -> FlowModel {
        match self {
            FlowModelKind::Clean => FlowModel::clean(),
            FlowModelKind::Contaminated => FlowModel::contaminated(),
            FlowModelKind::Ablation => FlowModel::ablation(),
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrackArgs {
    /// Sequence directory: numbered frames, `mask.png`, optional `gt.txt`.
    #[arg(long)]
    pub seq: PathBuf,
    /// Pose trace path; defaults to `trace.txt` inside the sequence.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::WeightedLsq)]
    pub estimator: EstimatorChoice,
    #[arg(long, value_enum, default_value_t)]
    pub prewarp: PreWarpMode,
    #[arg(long, value_enum, default_value_t)]
    pub weights: WeightKind,
    #[arg(long, default_value_t = 5.0)]
    pub inlier_thresh: f64,
    #[arg(long, default_value_t = 0.2)]
    pub lost_ratio: f64,
    #[arg(long, default_value_t = 10)]
    pub max_lost: usize,
    #[arg(long, default_value_t = 500)]
    pub max_corr: usize,
    #[arg(long, default_value_t = 1)]
    pub downscale: usize,
    #[arg(long, value_enum, default_value_t = FlowSource::Synthetic)]
    pub flow: FlowSource,
    /// Directory of `{source:06}_{target:06}.flo` files for `--flow file`.
    #[arg(long)]
    pub flow_dir: Option<PathBuf>,
    /// Degradation of synthetic flow.
    #[arg(long, value_enum, default_value_t = FlowModelKind::Clean)]
    pub flow_model: FlowModelKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    /// Sequence directory holding `gt.txt` and `mask.png`; repeatable.
    #[arg(long = "seq", required = true)]
    pub seqs: Vec<PathBuf>,
    /// Pose trace. A single value is looked up inside every sequence
    /// directory; otherwise give one per `--seq`.
    #[arg(long = "trace", default_value = "trace.txt")]
    pub traces: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [5.0, 15.0])]
    pub thresholds: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AblateArgs {
    /// Four short, small sequences instead of the full suite.
    #[arg(long)]
    pub quick: bool,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Required P@5 gap in points for the ordering checks.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Report ordering violations without failing.
    #[arg(long)]
    pub no_check: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t)]
    pub stencil: Stencil,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub rel_tol: f64,
    /// Check one weighted correspondence file instead of random instances.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for `gradcheck.json` and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    /// Lines `x y x' y' [w]`; `#` starts a comment.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EstimatorChoice::WeightedLsq)]
    pub estimator: EstimatorChoice,
    #[arg(long, default_value_t = 5.0)]
    pub threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes the homography as one row-major line.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Compare regenerated outputs byte for byte with the existing ones.
    #[arg(long)]
    pub verify: bool,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub stages_ms: BTreeMap<String, f64>,
}

struct Run {
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn new(subcommand: &str, args: &[String], config: serde_json::Value) -> Self {
        Self {
            manifest: RunManifest {
                subcommand: subcommand.into(),
                args: args.to_vec(),
                config,
                seeds: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").into(),
                stages_ms: BTreeMap::new(),
            },
            started: Instant::now(),
        }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.manifest.stages_ms.entry(name.into()).or_default() += t.elapsed().as_secs_f64() * 1e3;
        out
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.manifest.seeds.insert(name.into(), value);
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.manifest.outputs.push(path.to_path_buf());
        Ok(())
    }

    fn finish(mut self, manifest_path: &Path) -> Result<()> {
        self.manifest
            .stages_ms
            .insert("total".into(), self.started.elapsed().as_secs_f64() * 1e3);
        write_atomic(manifest_path, &to_json(&self.manifest)?)
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| Error::InvalidParameter(format!("serialization: {e}")))?;
    s.push(b'\n');
    Ok(s)
}

fn config_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: usize = w.parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.parse().map_err(|e| format!("height: {e}"))?;
    if w < 8 || h < 8 {
        return Err(format!("size {w}x{h} below 8x8"));
    }
    Ok((w, h))
}

/// Manifest path for a run whose output is a single file.
fn manifest_beside(file: &Path) -> PathBuf {
    let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{name}.manifest.json"))
}

/// Configuration problems exit with 2; everything else with 1.
pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) | Error::LengthMismatch { .. } | Error::EmptyMask(_) => 2,
        _ => 1,
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code.clamp(0, 2) as u8;
        }
    };
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn dispatch(cli: Cli, args: &[String]) -> Result<u8> {
    let jobs = cli.jobs.max(1);
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, args, jobs),
        Command::Track(a) => cmd_track(&a, args),
        Command::Eval(a) => cmd_eval(&a, args),
        Command::Ablate(a) => cmd_ablate(&a, args, jobs),
        Command::Gradcheck(a) => cmd_gradcheck(&a, args),
        Command::Estimate(a) => cmd_estimate(&a, args),
        Command::Replay(a) => cmd_replay(&a),
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })? {
        let p = entry
            .map_err(|e| Error::Io {
                path: dir.into(),
                source: e,
            })?
            .path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg" | "pgm" | "ppm")) {
            out.push(p);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::EmptyInput("source images"));
    }
    Ok(out)
}

pub fn cmd_synth(a: &SynthArgs, args: &[String], jobs: usize) -> Result<u8> {
    let pair = PairSpec {
        corner_perturbation_frac: a.corner_frac,
        blur_max_len: a.blur_max,
        degrade_quality: a.quality,
        degrade_method: a.degrade,
        rng_seed: 0,
    };
    pair.validate()?;
    if a.count == 0 || a.length == 0 {
        return Err(Error::InvalidParameter("count and length must be positive".into()));
    }
    if !(a.motion >= 0.0 && a.motion.is_finite()) {
        return Err(Error::InvalidParameter(format!("motion {} must be non-negative", a.motion)));
    }
    let suite = SequenceSuiteSpec {
        count: a.count,
        length: a.length,
        size: a.size,
        motion: a.motion,
        pair,
        seed: a.seed,
    };
    let sources = a.src_dir.as_deref().map(list_images).transpose()?;
    let mut run = Run::new("synth", args, config_value(a));
    run.seed("root", a.seed);
    if let Some(s) = &sources {
        run.manifest.inputs.extend(s.iter().cloned());
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let plan = |i: usize| -> Result<SequencePlan> {
        match &sources {
            None => suite.plan(i),
            Some(list) => {
                let src = read_image(&list[i % list.len()])?;
                let spec = PairSpec {
                    rng_seed: sub_seed(a.seed, "sequence", i as u64),
                    ..suite.pair.clone()
                };
                SequencePlan::new(src, a.length, a.motion, &spec)
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let dirs: Vec<PathBuf> = (0..a.count).map(|i| a.out.join(format!("seq_{i:03}"))).collect();
    run.stage("generate", || {
        use rayon::prelude::*;
        pool.install(|| {
            dirs.par_iter().enumerate().try_for_each(|(i, dir)| {
                let p = plan(i)?;
                write_sequence_streaming(dir, (0..p.len()).map(|t| p.render(t)), p.gt_poses(), p.template_mask())
            })
        })
    })?;
    for (i, d) in dirs.iter().enumerate() {
        run.seed(&format!("sequence_{i:03}"), sub_seed(a.seed, "sequence", i as u64));
        run.manifest.outputs.push(d.clone());
    }
    println!("wrote {} sequence(s) of {} frames to {}", a.count, a.length, a.out.display());
    run.finish(&a.out.join(MANIFEST_FILE))?;
    Ok(0)
}

pub fn cmd_track(a: &TrackArgs, args: &[String]) -> Result<u8> {
    let config = TrackerConfig {
        inlier_threshold: a.inlier_thresh,
        lost_ratio: a.lost_ratio,
        max_lost_frames: a.max_lost,
        max_correspondences: a.max_corr,
        downscale_factor: a.downscale,
        estimator: a.estimator,
        pre_warp: a.prewarp,
        rng_seed: a.seed,
        ..TrackerConfig::default()
    };
    config.validate()?;
    if a.flow == FlowSource::File && a.flow_dir.is_none() {
        return Err(Error::InvalidParameter("--flow file needs --flow-dir".into()));
    }
    let seq = SequenceDir::open(&a.seq)?;
    let flow: Box<dyn FlowProvider> = match a.flow {
        FlowSource::Synthetic => {
            let gt: Option<Vec<Homography>> = seq.gt.iter().copied().collect();
            let gt = gt
                .filter(|g| g.len() == seq.len())
                .ok_or_else(|| Error::InvalidParameter("synthetic flow needs a complete gt.txt".into()))?;
            Box::new(a.flow_model.model().provider(&gt, sub_seed(a.seed, "flow", 0)))
        }
        FlowSource::Lk => Box::new(LkFlowProvider::default()),
        FlowSource::File => Box::new(FileFlowProvider::new(a.flow_dir.clone().unwrap_or_default())),
    };
    let weights = a.weights.provider();
    let out = a.out.clone().unwrap_or_else(|| a.seq.join("trace.txt"));
    let mut run = Run::new("track", args, json!({ "args": a, "tracker": config }));
    run.seed("root", a.seed);
    run.seed("flow", sub_seed(a.seed, "flow", 0));
    run.manifest.inputs.push(a.seq.clone());
    if let Some(d) = &a.flow_dir {
        run.manifest.inputs.push(d.clone());
    }
    let template = seq.load_frame(0)?;
    let (results, timings) = run.stage("track", || {
        track_frames(
            &template,
            &seq.mask,
            config,
            (1..seq.len()).map(|t| seq.load_frame(t)),
            flow.as_ref(),
            weights.as_ref(),
        )
    })?;
    for (k, v) in &timings {
        run.manifest.stages_ms.insert(format!("tracker_{k}"), v.total_ms);
    }
    write_pose_trace(&out, &results)?;
    run.manifest.outputs.push(out.clone());
    let lost = results.iter().filter(|r| r.status == TrackStatus::Lost).count();
    println!("tracked {} frames, {} lost; trace in {}", results.len(), lost, out.display());
    run.finish(&manifest_beside(&out))?;
    Ok(0)
}

pub fn cmd_eval(a: &EvalArgs, args: &[String]) -> Result<u8> {
    if a.thresholds.is_empty() || a.thresholds.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("thresholds must be non-negative".into()));
    }
    let traces: Vec<PathBuf> = match a.traces.len() {
        1 => a.seqs.iter().map(|s| s.join(&a.traces[0])).collect(),
        n if n == a.seqs.len() => a.traces.clone(),
        n => {
            return Err(Error::InvalidParameter(format!(
                "{n} traces for {} sequences; give one or one per sequence",
                a.seqs.len()
            )))
        }
    };
    let mut run = Run::new("eval", args, config_value(a));
    let mut reports = Vec::new();
    for (seq, trace) in a.seqs.iter().zip(&traces) {
        let gt = read_homographies(&seq.join(GT_FILE))?;
        let mask = read_mask(&seq.join(MASK_FILE))?;
        let refs = mask.bounding_quad().ok_or(Error::EmptyMask(0))?;
        let poses: Vec<Homography> = read_pose_trace(trace)?.into_iter().map(|r| r.pose).collect();
        run.manifest.inputs.extend([seq.clone(), trace.clone()]);
        let report = run.stage("evaluate", || evaluate_poses(&gt, &poses, &refs, &a.thresholds))?;
        let name = seq.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| seq.display().to_string());
        reports.push(NamedReport { name, report });
    }
    let agg = aggregate(reports, &a.thresholds)?;

    let header: Vec<String> = a.thresholds.iter().map(|t| format!("P@{t}")).collect();
    let mut table = format!("sequence,{}\n", header.join(","));
    println!("{:<24} {}", "sequence", header.iter().map(|h| format!("{h:>8}")).collect::<String>());
    for s in &agg.sequences {
        let vals: Vec<f64> = a.thresholds.iter().map(|&t| s.report.precision(t).unwrap_or(f64::NAN)).collect();
        table.push_str(&format!("{},{}\n", s.name, join_f64(&vals)));
        println!("{:<24} {}", s.name, vals.iter().map(|v| format!("{v:>8.4}")).collect::<String>());
    }
    let mean: Vec<f64> = agg.mean_per_sequence.iter().map(|tp| tp.precision).collect();
    table.push_str(&format!("mean,{}\n", join_f64(&mean)));
    println!("{:<24} {}", "mean", mean.iter().map(|v| format!("{v:>8.4}")).collect::<String>());

    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    run.write(&a.out.join("eval.json"), &to_json(&agg)?)?;
    run.write(&a.out.join("eval.csv"), table.as_bytes())?;
    run.write(&a.out.join("curve.csv"), curve_csv(&agg.pooled_curve).as_bytes())?;
    run.finish(&a.out.join(MANIFEST_FILE))?;
    Ok(0)
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",")
}

pub fn cmd_ablate(a: &AblateArgs, args: &[String], jobs: usize) -> Result<u8> {
    let mut suite = if a.quick {
        SequenceSuiteSpec::quick()
    } else {
        SequenceSuiteSpec::default()
    };
    suite.seed = a.seed;
    if let Some(c) = a.count {
        suite.count = c;
    }
    if let Some(l) = a.length {
        suite.length = l;
    }
    if suite.count == 0 || suite.length < 2 {
        return Err(Error::InvalidParameter("suite needs at least one sequence of two frames".into()));
    }
    let model = FlowModel::ablation();
    let base = TrackerConfig::default();
    let mut run = Run::new("ablate", args, json!({ "args": a, "suite": suite, "flow_model": model, "tracker": base }));
    run.seed("root", a.seed);
    let rows = run.stage("ablation", || {
        run_ablation(&suite, &model, &base, &EstimatorChoice::ALL, &PreWarpMode::ALL, jobs)
    })?;
    let violations = ablation_violations(&rows, a.margin);
    let csv = ablation_csv(&rows);
    print!("{csv}");
    for v in &violations {
        eprintln!("ordering violation: {v}");
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    run.write(&a.out.join("ablation.csv"), csv.as_bytes())?;
    run.write(&a.out.join("ablation.json"), &to_json(&json!({ "rows": rows, "violations": violations }))?)?;
    run.finish(&a.out.join(MANIFEST_FILE))?;
    Ok(if violations.is_empty() || a.no_check { 0 } else { 1 })
}

pub fn cmd_gradcheck(a: &GradcheckArgs, args: &[String]) -> Result<u8> {
    if !(a.step > 0.0 && a.rel_tol > 0.0) {
        return Err(Error::InvalidParameter("step and tolerance must be positive".into()));
    }
    let cfg = GradcheckConfig {
        instances: a.instances,
        seed: a.seed,
        stencil: a.stencil,
        step: a.step,
        rel_tol: a.rel_tol,
        ..GradcheckConfig::default()
    };
    let mut run = Run::new("gradcheck", args, json!({ "args": a, "config": cfg }));
    run.seed("root", a.seed);
    let summary: GradcheckSummary = match &a.input {
        Some(path) => {
            let c = read_correspondences(path)?;
            run.manifest.inputs.push(path.clone());
            let inst = GradcheckInstance {
                correspondences: c,
                h_gt: None,
                eval_points: Vec::new(),
            };
            run.stage("check", || summarize(vec![check_instance(&inst, &cfg)], &cfg))
        }
        None => run.stage("check", || run_random(&cfg)),
    };
    for (i, o) in summary.outcomes.iter().enumerate() {
        if let InstanceOutcome::Skipped { reason } = o {
            println!("instance {i}: skipped ({reason})");
        }
    }
    println!(
        "max relative error {:.3e} over {} checked, {} skipped: {}",
        summary.max_rel_error,
        summary.checked,
        summary.skipped,
        if summary.passed { "pass" } else { "FAIL" }
    );
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        run.write(&dir.join("gradcheck.json"), &to_json(&summary)?)?;
        run.finish(&dir.join(MANIFEST_FILE))?;
    }
    Ok(if summary.passed { 0 } else { 1 })
}

pub fn cmd_estimate(a: &EstimateArgs, args: &[String]) -> Result<u8> {
    if !(a.threshold > 0.0) {
        return Err(Error::InvalidParameter(format!("threshold {} must be positive", a.threshold)));
    }
    let c = read_correspondences(&a.input)?;
    let cfg = EstimatorConfig {
        choice: a.estimator,
        inlier_threshold: a.threshold,
        ..EstimatorConfig::default()
    };
    let mut run = Run::new("estimate", args, json!({ "args": a, "estimator": cfg }));
    run.seed("ransac", a.seed);
    run.manifest.inputs.push(a.input.clone());
    let r = run.stage("estimate", || estimate(&c, &cfg, a.seed))?;
    let line = format_homography(&r.homography);
    println!("{line}");
    println!(
        "inliers {}/{} (ratio {:.4}) at {} px",
        r.inlier_mask.iter().filter(|&&b| b).count(),
        c.len(),
        r.inlier_ratio,
        a.threshold
    );
    if let Some(out) = &a.out {
        run.write(out, format!("{line}\n").as_bytes())?;
        run.finish(&manifest_beside(out))?;
    }
    Ok(0)
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.manifest).map_err(|e| Error::Io {
        path: a.manifest.clone(),
        source: e,
    })?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: a.manifest.display().to_string(),
        message: e.to_string(),
    })?;
    let files: Vec<PathBuf> = m.outputs.iter().flat_map(|p| collect_files(p)).collect();
    let before: Vec<Option<Vec<u8>>> = files.iter().map(|p| fs::read(p).ok()).collect();
    let argv = std::iter::once("woftkit".to_string()).chain(m.args.iter().cloned());
    let code = run(argv);
    if !a.verify || code != 0 {
        return Ok(code);
    }
    let mut differing = 0;
    for (p, old) in files.iter().zip(before) {
        let new = fs::read(p).ok();
        if old != new {
            eprintln!("differs: {}", p.display());
            differing += 1;
        }
    }
    println!("replayed {}: {} of {} output files identical", m.subcommand, files.len() - differing, files.len());
    Ok(if differing == 0 { 0 } else { 1 })
}

/// Files under `p` (or `p` itself), sorted, manifests excluded.
fn collect_files(p: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    if p.is_dir() {
        if let Ok(rd) = fs::read_dir(p) {
            for e in rd.flatten() {
                out.extend(collect_files(&e.path()));
            }
        }
    } else if !p.to_string_lossy().ends_with("manifest.json") {
        out.push(p.to_path_buf());
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("320x240"), Ok((320, 240)));
        assert!(parse_size("320").is_err());
        assert!(parse_size("4x4").is_err());
    }

    #[test]
    fn manifest_name() {
        assert_eq!(manifest_beside(Path::new("a/trace.txt")), PathBuf::from("a/trace.txt.manifest.json"));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["woftkit", "synth", "--procedural", "--out", "x", "--corner-frac", "0.6"]), 2);
        assert_eq!(run(["woftkit", "track"]), 2);
        assert_eq!(run(["woftkit", "nonsense"]), 2);
    }
}
