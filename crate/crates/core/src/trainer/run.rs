use nalgebra::{Vector3, Vector4};
use rand::seq::SliceRandom;
use serde::{Serialize, Serializer};

use super::{AdamState, EventKind, Schedule, StepRates, TrainConfig};
use crate::backward::render_backward;
use crate::cloud::{Gaussian, GaussianCloud};
use crate::densify::{
    detect_needles, opacity_reset, perturb_needles, prune, select_and_densify, DensifyAccumulator, DensifyReport,
    DensifyRngs, KnnIndex,
};
use crate::error::{Error, Result};
use crate::gsmath::{logit, Camera};
use crate::image::Image;
use crate::lossmetrics::{photometric_loss, psnr, ssim, LossConfig};
use crate::render::{render_forward, RenderOptions};
use crate::rng;
use crate::scenesio::{SceneBundle, ScenePoint};

const INIT_OPACITY: f64 = 0.1;
const INIT_KNN: usize = 3;
const MIN_INIT_SCALE: f64 = 1e-7;

/// Initial primitives: one isotropic Gaussian per point, sized by the mean
/// distance to its three nearest neighbours.
pub fn cloud_from_points(points: &[ScenePoint]) -> GaussianCloud {
    let positions: Vec<Vector3<f64>> = points.iter().map(|p| p.position).collect();
    let index = KnnIndex::new(&positions);
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = index.mean_distance(i, INIT_KNN).mean.max(MIN_INIT_SCALE);
            Gaussian {
                position: p.position,
                raw_scale: Vector3::repeat(d.ln()),
                rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
                raw_opacity: logit(INIT_OPACITY),
                color: p.color_f64(),
            }
        })
        .collect()
}

fn ser_db<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

/// Mean held-out metrics over a set of views.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    #[serde(serialize_with = "ser_db_plain")]
    pub psnr: f64,
    pub ssim: f64,
}

fn ser_db_plain<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    ser_db(&Some(*v), s)
}

pub fn evaluate<'a>(
    cloud: &GaussianCloud,
    views: impl IntoIterator<Item = (&'a Camera, &'a Image)>,
    opts: &RenderOptions,
    loss: &LossConfig,
) -> Result<EvalMetrics> {
    let (mut p, mut s, mut n) = (0.0, 0.0, 0usize);
    for (cam, gt) in views {
        let img = render_forward(cloud, cam, opts).color;
        p += psnr(&img, gt)?;
        s += ssim(&img, gt, loss)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("no views to evaluate"));
    }
    Ok(EvalMetrics { psnr: p / n as f64, ssim: s / n as f64 })
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub iter: u64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "ser_db")]
    pub psnr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim: Option<f64>,
    pub n_primitives: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub densify_report: Option<DensifyReport>,
}

/// Hooks for streaming progress out of [`train_with`].
pub trait TrainObserver {
    fn record(&mut self, _rec: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _iter: u64, _cloud: &GaussianCloud) -> Result<()> {
        Ok(())
    }

    fn event(&mut self, _iter: u64, _kind: EventKind) {}
}

pub struct NullObserver;

impl TrainObserver for NullObserver {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub cloud: GaussianCloud,
    pub history: Vec<MetricsRecord>,
    /// Photometric loss of every iteration.
    pub losses: Vec<f64>,
    pub final_eval: Option<EvalMetrics>,
    pub events: Vec<(u64, EventKind)>,
}

pub fn train(scene: &SceneBundle, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(scene, cfg, &mut NullObserver)
}

fn step_rates(cfg: &TrainConfig, it: u64, extent: f64) -> StepRates {
    let t = (it as f64 / cfg.total_iters as f64).clamp(0.0, 1.0);
    let lr = &cfg.lr;
    let pos = ((1.0 - t) * lr.position_init.ln() + t * lr.position_final.ln()).exp();
    StepRates { position: pos * extent, scale: lr.scale, rotation: lr.rotation, opacity: lr.opacity, color: lr.color }
}

pub fn train_with(scene: &SceneBundle, cfg: &TrainConfig, obs: &mut dyn TrainObserver) -> Result<TrainOutcome> {
    cfg.validate()?;
    if scene.initial_points.is_empty() {
        return Err(Error::EmptyInit);
    }
    if scene.train.is_empty() {
        return Err(Error::contract("scene has no training views"));
    }
    let opts = RenderOptions { background: cfg.background, tile_size: cfg.tile_size, ..RenderOptions::default() };
    let schedule = Schedule::from_config(cfg);
    let extent = if scene.scene_extent > 0.0 { scene.scene_extent } else { 1.0 };
    let train_cams: Vec<Camera> = scene.train.iter().map(|&i| scene.cameras[i].clone()).collect();
    let image_size = (train_cams[0].width, train_cams[0].height);

    let mut cloud = cloud_from_points(&scene.initial_points);
    let mut adam = AdamState::new(cloud.len());
    let mut acc = DensifyAccumulator::new(cloud.len());
    let mut rngs = DensifyRngs::from_seed(cfg.seed);
    let mut view_rng = rng::stream(cfg.seed, rng::VIEWS);
    let mut order: Vec<usize> = Vec::new();

    let mut out = TrainOutcome { cloud: GaussianCloud::new(), history: Vec::new(), losses: Vec::new(), final_eval: None, events: Vec::new() };
    for it in 1..=cfg.total_iters {
        if order.is_empty() {
            order = scene.train.clone();
            order.shuffle(&mut view_rng);
            order.reverse();
        }
        let view = order.pop().expect("refilled above");
        let (cam, gt) = (&scene.cameras[view], &scene.images[view]);
        let fwd = render_forward(&cloud, cam, &opts);
        let (loss, dl) = photometric_loss(&fwd.color, gt, &cfg.loss)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iter: it, snapshot: Box::new(cloud) });
        }
        out.losses.push(loss);
        let grads = render_backward(&cloud, cam, &fwd, &dl, &opts)?;
        if it < cfg.densify_until {
            acc.accumulate_view(&grads, &fwd.stats);
        }
        adam.step(&mut cloud, &grads, &step_rates(cfg, it, extent));

        let mut report: Option<DensifyReport> = None;
        let mut eval = None;
        let events = schedule.events_at(it);
        for &ev in &events {
            match ev {
                EventKind::Densify => {
                    let (grown, mut rep) =
                        select_and_densify(&cloud, &acc, &cfg.strategy, extent, image_size, &mut rngs);
                    // screen-size pruning only once opacities have been reset
                    let size_limit = (it > cfg.opacity_reset_interval).then_some(cfg.strategy.max_screen_frac);
                    let (pruned, kept) = prune(&grown, cfg.strategy.min_opacity, size_limit, &train_cams);
                    rep.then_keep(&kept);
                    adam = adam.resize(&rep.origins);
                    cloud = pruned;
                    acc.reset(cloud.len());
                    rep.iteration = it;
                    report = Some(rep);
                }
                EventKind::OpacityReset => {
                    opacity_reset(&mut cloud, cfg.strategy.opacity_ceiling);
                    adam.opacity = super::Moments::zeros(1, cloud.len());
                }
                EventKind::NeedlePerturb => {
                    let flagged = detect_needles(&cloud, cfg.strategy.tau_ns);
                    perturb_needles(&mut cloud, &flagged);
                    for &i in &flagged {
                        adam.scale.clear(i);
                    }
                    let rep = report.get_or_insert_with(|| DensifyReport {
                        iteration: it,
                        total: cloud.len(),
                        ..DensifyReport::default()
                    });
                    rep.needle_perturbed = flagged.len();
                }
                EventKind::Eval => {
                    if !scene.test.is_empty() {
                        eval = Some(evaluate(&cloud, scene.test_views(), &opts, &cfg.loss)?);
                    }
                }
                EventKind::Checkpoint => obs.checkpoint(it, &cloud)?,
            }
            obs.event(it, ev);
            out.events.push((it, ev));
        }
        if it == cfg.total_iters {
            out.final_eval = eval;
        }
        if it % cfg.log_interval == 0 || !events.is_empty() {
            let rec = MetricsRecord {
                iter: it,
                loss,
                psnr: eval.map(|e| e.psnr),
                ssim: eval.map(|e| e.ssim),
                n_primitives: cloud.len(),
                densify_report: report,
            };
            obs.record(&rec)?;
            out.history.push(rec);
        }
    }
    out.cloud = cloud;
    Ok(out)
}
