use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use latefuse::io::{self, FusedFile};
use latefuse::pipeline::{
    build_scene, evaluate_ticks, run_experiment, ExperimentConfig, Method, MethodRun, NoiseLevel,
};
use latefuse::{Error, Result};

/// Late fusion of noisy bird's-eye-view detections: scene synthesis, fusion
/// baselines, and FP-aware evaluation.
#[derive(Parser)]
#[command(name = "latefuse", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic ground-truth scene file.
    Synth(SynthArgs),
    /// Fuse per-sensor detections with each method; one file per method and noise level.
    Fuse(FuseArgs),
    /// Score fused-detection files against a scene.
    Eval(EvalArgs),
    /// Run the full method x noise-level matrix and write result tables.
    Bench(BenchArgs),
    /// Print mean ± std comparison tables from a summary.json.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct SceneArgs {
    /// Total object count, split across classes.
    #[arg(long)]
    objects: Option<usize>,
    /// Scene length, e.g. 10s, 500ms or microseconds.
    #[arg(long)]
    duration: Option<String>,
    /// Ground-truth frame spacing.
    #[arg(long)]
    frame_period: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory (default: $LATEFUSE_OUT or ./latefuse_out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Flat key = value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: unikf, wls, nms-std, nms-giou, wbf, psa, dist-late, none.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    trials: Option<u32>,
    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Existing scene file to use instead of synthesizing one.
    #[arg(long)]
    scene: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Scene file name inside the output directory.
    #[arg(long, default_value = "scene.jsonl")]
    name: String,
}

#[derive(Args)]
struct FuseArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
    /// `a,b` = ego preset a with secondary preset b; a single name applies to both.
    #[arg(long)]
    noise: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Scene file the detections were produced from.
    #[arg(long)]
    scene: PathBuf,
    /// Fused-detection files written by `fuse`.
    #[arg(long, required = true, num_args = 1..)]
    fused: Vec<PathBuf>,
    /// Reference ground truth for false positives: lineage or nearest.
    #[arg(long, default_value = "lineage")]
    fp_reference: String,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    out: OutArgs,
    /// Comma-separated noise levels; `a+b` pairs ego preset a with secondary preset b.
    #[arg(long)]
    noise: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.json, or a directory containing one.
    path: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::OutOfRange(_) | Error::Config(_) => 1,
        Error::Validation(_) | Error::Parse { .. } => 2,
        Error::FilterDegenerate(_) | Error::Io { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.cmd {
        Cmd::Synth(a) => synth(a),
        Cmd::Fuse(a) => fuse(a),
        Cmd::Eval(a) => eval(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_dir(o: &OutArgs, from_config: Option<PathBuf>) -> PathBuf {
    o.out.clone().or(from_config).unwrap_or_else(io::default_out_dir)
}

fn apply_scene_args(a: &SceneArgs, cfg: &mut ExperimentConfig) -> Result<()> {
    if let Some(n) = a.objects {
        if n == 0 {
            return Err(Error::Config("--objects must be >= 1".into()));
        }
        cfg.scene.counts = latefuse::noise::SceneSpec::mixed("", n, 1, 1).counts;
    }
    if let Some(d) = &a.duration {
        cfg.scene.duration_us = io::parse_duration(d)?;
    }
    if let Some(p) = &a.frame_period {
        cfg.scene.frame_period_us = io::parse_duration(p)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    Ok(())
}

/// Config file first, then flags. Returns the config and the `out`/`jobs`
/// values found in the file.
fn load_config(run: &RunArgs, scene: &SceneArgs) -> Result<(ExperimentConfig, Option<PathBuf>, Option<usize>)> {
    let mut cfg = ExperimentConfig::default();
    let (mut out, mut jobs) = (None, None);
    if let Some(path) = &run.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        for e in io::apply_config(&io::parse_config(&text)?, &mut cfg)? {
            match e.key.as_str() {
                "out" => out = Some(PathBuf::from(e.value)),
                _ => {
                    jobs = Some(e.value.parse().map_err(|_| {
                        Error::Config(format!("line {}: jobs must be a positive integer", e.line))
                    })?)
                }
            }
        }
    }
    apply_scene_args(scene, &mut cfg)?;
    if let Some(m) = &run.methods {
        cfg.methods = Method::parse_list(m)?;
    }
    if let Some(t) = run.trials {
        cfg.trials = t;
    }
    Ok((cfg, out, jobs))
}

fn jobs(flag: Option<usize>, from_config: Option<usize>) -> usize {
    flag.or(from_config)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn scene_for(run: &RunArgs, cfg: &ExperimentConfig) -> Result<latefuse::noise::Scene> {
    match &run.scene {
        Some(p) => io::load_scene(p),
        None => build_scene(cfg),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    apply_scene_args(&a.scene, &mut cfg)?;
    cfg.scene.validate()?;
    let scene = build_scene(&cfg)?;
    let path = out_dir(&a.out, None).join(&a.name);
    io::save_scene(&scene, &path, a.out.force)?;
    println!(
        "{}: {} objects, {} frames, {} object-frames",
        path.display(),
        scene.frames.first().map_or(0, |f| f.objects.len()),
        scene.frames.len(),
        scene.object_count()
    );
    Ok(())
}

/// `noise1` or `noise1,noise3` (ego, secondary) for `fuse`.
fn fuse_level(s: &str) -> Result<NoiseLevel> {
    match s.split(',').map(str::trim).collect::<Vec<_>>().as_slice() {
        [a, b] => Ok(NoiseLevel::pair(io::resolve_noise_preset(a)?, io::resolve_noise_preset(b)?)),
        _ => NoiseLevel::parse(s),
    }
}

fn fuse(a: FuseArgs) -> Result<()> {
    let (mut cfg, cfg_out, cfg_jobs) = load_config(&a.run, &a.scene)?;
    if let Some(n) = &a.noise {
        cfg.levels = vec![fuse_level(n)?];
    }
    let scene = scene_for(&a.run, &cfg)?;
    let result = run_experiment(&cfg, &scene, jobs(a.run.jobs, cfg_jobs))?;
    let dir = out_dir(&a.out, cfg_out);
    let digest = io::scene_digest(&scene);
    let scene_path = dir.join("scene.jsonl");
    let files: Vec<(PathBuf, FusedFile)> = result
        .runs
        .iter()
        .map(|r| {
            (
                dir.join("fused").join(&r.level).join(format!("{}.jsonl", r.method)),
                FusedFile {
                    scene_id: scene.scene_id.clone(),
                    scene_digest: digest.clone(),
                    method: r.method.to_string(),
                    level: r.level.clone(),
                    ticks: r.ticks.clone(),
                },
            )
        })
        .collect();
    if !a.out.force {
        if let Some(p) = std::iter::once(&scene_path).chain(files.iter().map(|f| &f.0)).find(|p| p.exists()) {
            return Err(Error::Validation(format!("{} already exists (use --force to overwrite)", p.display())));
        }
    }
    io::save_scene(&scene, &scene_path, true)?;
    for ((path, file), run) in files.iter().zip(&result.runs) {
        io::save_fused(file, path, true)?;
        let boxes: usize = run.ticks.iter().map(|t| t.predictions.len()).sum();
        println!(
            "{}: {} trials, {} ticks, {} boxes",
            path.display(),
            cfg.trials,
            run.ticks.len(),
            boxes
        );
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let fp_reference = match a.fp_reference.as_str() {
        "lineage" => latefuse::eval::FpReference::Lineage,
        "nearest" => latefuse::eval::FpReference::Nearest,
        v => return Err(Error::Config(format!("--fp-reference must be lineage or nearest, got '{v}'"))),
    };
    let scene = io::load_scene(&a.scene)?;
    let digest = io::scene_digest(&scene);
    let mut runs = Vec::new();
    for path in &a.fused {
        let file = io::load_fused(path)?;
        if file.scene_id != scene.scene_id || file.scene_digest != digest {
            return Err(Error::Validation(format!(
                "{} was fused from a different scene than {}",
                path.display(),
                a.scene.display()
            )));
        }
        let method: Method = file.method.parse()?;
        let trials = file.ticks.iter().map(|t| t.trial + 1).max().unwrap_or(1);
        let evaluation = evaluate_ticks(&scene, &file.ticks, trials, fp_reference)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        runs.push(MethodRun {
            level: file.level,
            method,
            evaluation,
            ticks: file.ticks,
        });
    }
    finish(&runs, &out_dir(&a.out, None), a.out.force)
}

fn bench(a: BenchArgs) -> Result<()> {
    let (mut cfg, cfg_out, cfg_jobs) = load_config(&a.run, &a.scene)?;
    if a.run.config.is_none() {
        cfg.methods = Method::ALL.to_vec();
        cfg.levels = ["noise1", "noise2", "noise3", "noise1+noise3"]
            .iter()
            .map(|l| NoiseLevel::parse(l))
            .collect::<Result<_>>()?;
        if let Some(m) = &a.run.methods {
            cfg.methods = Method::parse_list(m)?;
        }
    }
    if let Some(n) = &a.noise {
        cfg.levels = n.split(',').map(|l| NoiseLevel::parse(l.trim())).collect::<Result<_>>()?;
    }
    let scene = scene_for(&a.run, &cfg)?;
    let result = run_experiment(&cfg, &scene, jobs(a.run.jobs, cfg_jobs))?;
    finish(&result.runs, &out_dir(&a.out, cfg_out), a.out.force)
}

fn finish(runs: &[MethodRun], dir: &Path, force: bool) -> Result<()> {
    let files = io::write_results(runs, dir, force)?;
    let rows = io::read_summary(&files.summary_json)?;
    print!("{}", io::render_report(&rows));
    println!("results written to {}", dir.display());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let path = a.path.unwrap_or_else(io::default_out_dir);
    let path = if path.is_dir() { path.join("summary.json") } else { path };
    print!("{}", io::render_report(&io::read_summary(&path)?));
    Ok(())
}
