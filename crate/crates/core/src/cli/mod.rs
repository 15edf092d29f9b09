//! Command-line front end behind the `reactsplat` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backward::{gradcheck_linear_loss, identity_deviation, GradCheckReport, ParamSelector, StackEntry};
use crate::cloud::GaussianCloud;
use crate::densify::StrategyKind;
use crate::error::{Error, Result};
use crate::image::{save_depth_png, Image};
use crate::lossmetrics::{psnr, ssim, LossConfig};
use crate::render::{render_forward, RenderOptions};
use crate::rng;
use crate::scenesio::random::{random_scene, random_weights, RandomSceneSpec};
use crate::scenesio::{
    generate_synthetic_scene, load_checkpoint, load_scene, save_checkpoint, CamerasFile, SceneBundle,
    SyntheticPreset, CAMERAS_FILE,
};
use crate::trainer::{apply_override, parse_config, train_with, EventKind, MetricsRecord, TrainConfig, TrainObserver};

/// Exit status when some, but not all, strategies of `compare` failed.
pub const EXIT_PARTIAL: u8 = 3;
/// Exit status when a numerical check ran but did not meet its tolerance.
pub const EXIT_CHECK_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "reactsplat", version, about = "Gaussian splatting with re-activated densification")]
pub struct Cli {
    /// Worker threads for rendering (defaults to all cores).
    #[arg(long, global = true, env = "REACTSPLAT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a scene and write metrics, checkpoints and test renders.
    Train(TrainArgs),
    /// Render a checkpoint from the cameras of a scene.
    Render(RenderArgs),
    /// PSNR/SSIM of checkpoint renders (or an image directory) against ground truth.
    Eval(EvalArgs),
    /// Analytic gradients versus finite differences, plus the blend-gradient identity.
    Gradcheck(GradcheckArgs),
    /// Train every densification strategy under one seed and tabulate results.
    Compare(TrainArgs),
    /// Write a synthetic scene directory.
    GenScene(GenSceneArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// JSON config; omitted keys take desk-scale defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Densification strategy; overrides the config file.
    #[arg(long)]
    pub strategy: Option<StrategyKind>,
    /// Total iterations; the densification window is clipped to fit.
    #[arg(long)]
    pub iters: Option<u64>,
    /// `dotted.key=value` config override (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene directory whose cameras.json provides the viewpoints.
    #[arg(long)]
    pub scene: PathBuf,
    /// Render only this camera index.
    #[arg(long)]
    pub camera: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of already rendered images named like the ground truth.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Evaluate every view instead of only the test split.
    #[arg(long)]
    pub all_views: bool,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub scenes: usize,
    #[arg(long, default_value_t = 20)]
    pub primitives: usize,
    #[arg(long, default_value_t = 32)]
    pub size: u32,
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Random per-pixel stacks for the identity check.
    #[arg(long, default_value_t = 50)]
    pub stacks: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    /// high-frequency-plane, sparse-init or corner-grass.
    #[arg(long)]
    pub preset: SyntheticPreset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `std::env::args` and run; the binary's whole body.
pub fn main() -> ExitCode {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> ExitCode {
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::FAILURE;
        }
        n => rayon::ThreadPoolBuilder::new().num_threads(n.unwrap_or(0)).build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::FAILURE;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Train(a) => cmd_train(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::GenScene(a) => cmd_gen_scene(&a),
    }
}

/// Config file → strategy flag → `--set` overrides → `--iters` → `--seed`.
pub fn resolve_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(p.clone()),
                _ => e.into(),
            })?;
            parse_config(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(k) = a.strategy {
        cfg = cfg.with_strategy(k);
    }
    for o in &a.overrides {
        cfg = apply_override(&cfg, o)?;
    }
    if let Some(n) = a.iters {
        cfg.total_iters = n;
        cfg.densify_until = cfg.densify_until.min(n);
        cfg.densify_from = cfg.densify_from.min(cfg.densify_until);
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}

struct FileObserver {
    metrics: BufWriter<File>,
    checkpoints: PathBuf,
}

impl TrainObserver for FileObserver {
    fn record(&mut self, rec: &MetricsRecord) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, rec)?;
        self.metrics.write_all(b"\n")?;
        Ok(())
    }

    fn checkpoint(&mut self, iter: u64, cloud: &GaussianCloud) -> Result<()> {
        std::fs::create_dir_all(&self.checkpoints)?;
        save_checkpoint(cloud, &self.checkpoints.join(format!("iter_{iter:06}.ply")))
    }

    fn event(&mut self, _iter: u64, _kind: EventKind) {}
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub strategy: StrategyKind,
    pub iterations: u64,
    #[serde(serialize_with = "ser_inf")]
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub n_primitives: usize,
}

fn ser_inf<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

fn render_views(cloud: &GaussianCloud, scene: &SceneBundle, views: &[usize], opts: &RenderOptions, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for &v in views {
        let cam = &scene.cameras[v];
        let out = render_forward(cloud, cam, opts);
        out.color.save_png(&dir.join(format!("view_{v:03}.png")))?;
        save_depth_png(&out.depth, cam.width, cam.height, &dir.join(format!("depth_{v:03}.png")))?;
    }
    Ok(())
}

/// Train one configuration into `out`; returns its summary.
pub fn train_to_dir(scene: &SceneBundle, cfg: &TrainConfig, out: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let mut obs = FileObserver {
        metrics: BufWriter::new(File::create(out.join("metrics.jsonl"))?),
        checkpoints: out.join("checkpoints"),
    };
    let outcome = train_with(scene, cfg, &mut obs)?;
    obs.metrics.flush()?;
    save_checkpoint(&outcome.cloud, &out.join("final.ply"))?;
    let opts = RenderOptions { background: cfg.background, tile_size: cfg.tile_size, ..RenderOptions::default() };
    render_views(&outcome.cloud, scene, &scene.test, &opts, &out.join("renders"))?;
    let summary = RunSummary {
        strategy: cfg.strategy.kind,
        iterations: cfg.total_iters,
        psnr: outcome.final_eval.map(|e| e.psnr),
        ssim: outcome.final_eval.map(|e| e.ssim),
        n_primitives: outcome.cloud.len(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_train(a: &TrainArgs) -> Result<ExitCode> {
    let cfg = resolve_config(a)?;
    let scene = load_scene(&a.scene)?;
    let s = train_to_dir(&scene, &cfg, &a.out)?;
    println!("{}", serde_json::to_string(&s)?);
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Debug, Serialize)]
struct CompareRow {
    strategy: StrategyKind,
    status: &'static str,
    #[serde(serialize_with = "ser_inf")]
    psnr: Option<f64>,
    ssim: Option<f64>,
    n_primitives: Option<usize>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_compare(a: &TrainArgs) -> Result<ExitCode> {
    let base = resolve_config(a)?;
    let scene = load_scene(&a.scene)?;
    std::fs::create_dir_all(&a.out)?;
    let mut rows = Vec::new();
    for kind in StrategyKind::ALL {
        let mut cfg = base.clone().with_strategy(kind);
        for o in &a.overrides {
            cfg = apply_override(&cfg, o)?;
        }
        let t0 = Instant::now();
        let res = train_to_dir(&scene, &cfg, &a.out.join(kind.name()));
        let wall = t0.elapsed().as_secs_f64();
        rows.push(match res {
            Ok(s) => CompareRow {
                strategy: kind,
                status: "ok",
                psnr: s.psnr,
                ssim: s.ssim,
                n_primitives: Some(s.n_primitives),
                wall_time_s: wall,
                error: None,
            },
            Err(e) => CompareRow {
                strategy: kind,
                status: "failed",
                psnr: None,
                ssim: None,
                n_primitives: None,
                wall_time_s: wall,
                error: Some(e.to_string()),
            },
        });
    }
    write_json(&a.out.join("summary.json"), &rows)?;
    let mut table = format!("{:<10} {:>7} {:>9} {:>7} {:>11} {:>9}\n", "strategy", "status", "psnr", "ssim", "primitives", "time_s");
    for r in &rows {
        let f = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
        table.push_str(&format!(
            "{:<10} {:>7} {:>9} {:>7} {:>11} {:>9.1}\n",
            r.strategy.name(),
            r.status,
            f(r.psnr, 3),
            f(r.ssim, 4),
            r.n_primitives.map_or("-".to_string(), |n| n.to_string()),
            r.wall_time_s
        ));
    }
    std::fs::write(a.out.join("summary.txt"), &table)?;
    print!("{table}");
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    Ok(match failed {
        0 => ExitCode::SUCCESS,
        n if n == rows.len() => ExitCode::FAILURE,
        _ => ExitCode::from(EXIT_PARTIAL),
    })
}

fn cmd_render(a: &RenderArgs) -> Result<ExitCode> {
    let cloud = load_checkpoint(&a.checkpoint)?;
    let cams = CamerasFile::load(&a.scene.join(CAMERAS_FILE))?.cameras;
    let picked: Vec<usize> = match a.camera {
        Some(i) if i >= cams.len() => {
            return Err(Error::contract(format!("camera {i} out of range (scene has {})", cams.len())))
        }
        Some(i) => vec![i],
        None => (0..cams.len()).collect(),
    };
    std::fs::create_dir_all(&a.out)?;
    let opts = RenderOptions::default();
    for i in picked {
        let cam = cams[i].camera()?;
        let out = render_forward(&cloud, &cam, &opts);
        out.color.save_png(&a.out.join(format!("view_{i:03}.png")))?;
        save_depth_png(&out.depth, cam.width, cam.height, &a.out.join(format!("depth_{i:03}.png")))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct EvalReport {
    views: usize,
    #[serde(serialize_with = "ser_inf")]
    psnr: Option<f64>,
    ssim: f64,
    per_view: Vec<EvalView>,
}

#[derive(Serialize)]
struct EvalView {
    index: usize,
    #[serde(serialize_with = "ser_inf")]
    psnr: Option<f64>,
    ssim: f64,
}

fn cmd_eval(a: &EvalArgs) -> Result<ExitCode> {
    let scene = load_scene(&a.scene)?;
    let records = CamerasFile::load(&a.scene.join(CAMERAS_FILE))?.cameras;
    let views: Vec<usize> = if a.all_views { (0..scene.cameras.len()).collect() } else { scene.test.clone() };
    let cloud = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let cfg = LossConfig::default();
    let mut per_view = Vec::new();
    for &v in &views {
        let img = match (&cloud, &a.images) {
            (Some(c), _) => render_forward(c, &scene.cameras[v], &RenderOptions::default()).color,
            (None, Some(dir)) => {
                let name = Path::new(&records[v].image).file_name().ok_or_else(|| Error::contract("empty image path"))?;
                Image::load_png(&dir.join(name))?
            }
            (None, None) => unreachable!("clap requires one source"),
        };
        let gt = &scene.images[v];
        if !img.same_shape(gt) {
            return Err(Error::DimensionMismatch {
                what: format!("view {v}"),
                expected_w: gt.width,
                expected_h: gt.height,
                found_w: img.width,
                found_h: img.height,
            });
        }
        per_view.push(EvalView { index: v, psnr: Some(psnr(&img, gt)?), ssim: ssim(&img, gt, &cfg)? });
    }
    if per_view.is_empty() {
        return Err(Error::contract("no views selected for evaluation"));
    }
    let n = per_view.len() as f64;
    let report = EvalReport {
        views: per_view.len(),
        psnr: Some(per_view.iter().map(|v| v.psnr.unwrap_or(0.0)).sum::<f64>() / n),
        ssim: per_view.iter().map(|v| v.ssim).sum::<f64>() / n,
        per_view,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &a.out {
        std::fs::write(p, format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IdentitySummary {
    stacks: usize,
    max_rel_deviation: f64,
}

#[derive(Serialize)]
struct GradcheckSummary {
    tolerance: f64,
    gradients: GradCheckReport,
    identity: IdentitySummary,
    pass: bool,
}

/// Random blend stacks of 2..=10 entries with opacities bounded away from
/// the clamp.
pub fn random_stacks(seed: u64, count: usize) -> Vec<Vec<StackEntry>> {
    use rand::Rng;
    let mut r = rng::stream(seed, "identity-stacks");
    (0..count)
        .map(|_| {
            let n = r.random_range(2..=10);
            (0..n)
                .map(|_| StackEntry {
                    opacity: r.random_range(0.05..0.95),
                    gauss: r.random_range(0.05..1.0),
                    color: r.random_range(0.0..1.0),
                    g_prime: r.random_range(-1.0..1.0),
                })
                .collect()
        })
        .collect()
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<ExitCode> {
    let mut total = GradCheckReport::default();
    let opts = RenderOptions::with_background([0.1, 0.2, 0.3]);
    for k in 0..a.scenes {
        let seed = a.seed.wrapping_add(k as u64);
        let spec = RandomSceneSpec { primitives: a.primitives, width: a.size, height: a.size, cameras: 1 };
        let (cloud, cams) = random_scene(seed, spec);
        let w = random_weights(&mut rng::stream(seed, "weights"), a.size, a.size);
        total.merge(gradcheck_linear_loss(&cloud, &cams[0], &w, &opts, &ParamSelector::all(), a.step)?);
    }
    let stacks = random_stacks(a.seed, a.stacks);
    let max_dev = stacks.iter().map(|s| identity_deviation(s)).fold(0.0, f64::max);
    let pass = total.max_rel_err <= a.tolerance && max_dev <= 1e-10;
    let summary = GradcheckSummary {
        tolerance: a.tolerance,
        gradients: total,
        identity: IdentitySummary { stacks: stacks.len(), max_rel_deviation: max_dev },
        pass,
    };
    let text = serde_json::to_string_pretty(&summary)?;
    if let Some(p) = &a.out {
        std::fs::write(p, format!("{text}\n"))?;
    }
    println!("{text}");
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_CHECK_FAILED) })
}

fn cmd_gen_scene(a: &GenSceneArgs) -> Result<ExitCode> {
    let dir = generate_synthetic_scene(a.preset, a.seed, &a.out)?;
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}
