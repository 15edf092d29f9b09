//! Finite-difference verification of the analytic backward pass.

use std::collections::BTreeMap;

use serde::Serialize;

use super::extended::{linear_loss_extended, DoubleDouble, Real};
use super::{render_backward, ParamGradients};
use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::gsmath::{project_gaussian_with, Camera};
use crate::image::Image;
use crate::render::{render_forward, RenderOptions};

/// Denominator floor of [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Step shrink attempts when a perturbation crosses a compositing kink.
const KINK_RETRIES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Position,
    RawScale,
    Rotation,
    RawOpacity,
    Color,
}

impl ParamKind {
    pub const ALL: [ParamKind; 5] =
        [ParamKind::Position, ParamKind::RawScale, ParamKind::Rotation, ParamKind::RawOpacity, ParamKind::Color];

    pub fn components(self) -> usize {
        match self {
            ParamKind::Position | ParamKind::RawScale | ParamKind::Color => 3,
            ParamKind::Rotation => 4,
            ParamKind::RawOpacity => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ParamKind::Position => "position",
            ParamKind::RawScale => "raw_scale",
            ParamKind::Rotation => "rotation",
            ParamKind::RawOpacity => "raw_opacity",
            ParamKind::Color => "color",
        }
    }
}

/// One scalar parameter of one primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamRef {
    pub primitive: usize,
    pub kind: ParamKind,
    pub component: usize,
}

impl ParamRef {
    pub fn get(&self, cloud: &GaussianCloud) -> f64 {
        let i = self.primitive;
        match self.kind {
            ParamKind::Position => cloud.positions[i][self.component],
            ParamKind::RawScale => cloud.raw_scales[i][self.component],
            ParamKind::Rotation => cloud.rotations[i][self.component],
            ParamKind::RawOpacity => cloud.raw_opacities[i],
            ParamKind::Color => cloud.colors[i][self.component],
        }
    }

    pub fn set(&self, cloud: &mut GaussianCloud, v: f64) {
        let i = self.primitive;
        match self.kind {
            ParamKind::Position => cloud.positions[i][self.component] = v,
            ParamKind::RawScale => cloud.raw_scales[i][self.component] = v,
            ParamKind::Rotation => cloud.rotations[i][self.component] = v,
            ParamKind::RawOpacity => cloud.raw_opacities[i] = v,
            ParamKind::Color => cloud.colors[i][self.component] = v,
        }
    }

    pub fn analytic(&self, g: &ParamGradients) -> f64 {
        let i = self.primitive;
        match self.kind {
            ParamKind::Position => g.d_position[i][self.component],
            ParamKind::RawScale => g.d_raw_scale[i][self.component],
            ParamKind::Rotation => g.d_rotation[i][self.component],
            ParamKind::RawOpacity => g.d_raw_opacity[i],
            ParamKind::Color => g.d_color[i][self.component],
        }
    }
}

/// Which parameters to check.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSelector {
    pub kinds: Vec<ParamKind>,
    /// `None` selects every primitive.
    pub primitives: Option<Vec<usize>>,
}

impl ParamSelector {
    pub fn all() -> Self {
        Self { kinds: ParamKind::ALL.to_vec(), primitives: None }
    }

    pub fn only(kind: ParamKind) -> Self {
        Self { kinds: vec![kind], primitives: None }
    }

    fn refs(&self, n: usize) -> Vec<ParamRef> {
        let prims: Vec<usize> = self.primitives.clone().unwrap_or_else(|| (0..n).collect());
        let mut out = Vec::new();
        for &primitive in &prims {
            for &kind in &self.kinds {
                for component in 0..kind.components() {
                    out.push(ParamRef { primitive, kind, component });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorstEntry {
    pub param: ParamRef,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Parameters whose perturbation kept crossing a compositing kink.
    pub skipped_nonsmooth: usize,
    pub max_rel_err: f64,
    pub worst: Option<WorstEntry>,
    pub max_rel_err_by_kind: BTreeMap<&'static str, f64>,
}

impl GradCheckReport {
    fn record(&mut self, param: ParamRef, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        let e = self.max_rel_err_by_kind.entry(param.kind.name()).or_insert(0.0);
        *e = e.max(rel);
        if rel > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = Some(WorstEntry { param, analytic, numeric, rel_err: rel });
        }
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.skipped_nonsmooth += other.skipped_nonsmooth;
        for (k, v) in other.max_rel_err_by_kind {
            let e = self.max_rel_err_by_kind.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
        if other.max_rel_err > self.max_rel_err || (self.worst.is_none() && other.worst.is_some()) {
            self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
            self.worst = other.worst;
        }
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

fn step_for(x: f64, step: f64) -> f64 {
    step * x.abs().max(1.0)
}

/// Pixel rectangle that can change when primitive `i` is nudged.
fn affected_region(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions, i: usize) -> (u32, u32, u32, u32) {
    let p = project_gaussian_with(&cloud.get(i), cam, opts.low_pass);
    if !p.valid {
        return (0, 0, 0, 0);
    }
    let half = p.support_half_extent();
    let clip = |v: f64, hi: u32| v.clamp(0.0, f64::from(hi)) as u32;
    (
        clip((p.mean.x - half.x).floor() - 2.0, cam.width),
        clip((p.mean.x + half.x).ceil() + 3.0, cam.width),
        clip((p.mean.y - half.y).floor() - 2.0, cam.height),
        clip((p.mean.y + half.y).ceil() + 3.0, cam.height),
    )
}

/// Checks analytic gradients of `L = Σ weights · image` against central
/// differences evaluated in double-double precision.
///
/// `step` is relative: the perturbation is `step · max(|x|, 1)`. When the
/// perturbation changes which primitives are blended where (support edge,
/// opacity clamp, early termination, depth swap) the step is shrunk; a
/// parameter that still straddles a kink is counted as skipped.
pub fn gradcheck_linear_loss(
    cloud: &GaussianCloud,
    cam: &Camera,
    weights: &Image,
    opts: &RenderOptions,
    selector: &ParamSelector,
    step: f64,
) -> Result<GradCheckReport> {
    if !(step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let forward = render_forward(cloud, cam, opts);
    let grads = render_backward(cloud, cam, &forward, weights, opts)?;
    let mut report = GradCheckReport::default();
    for param in selector.refs(cloud.len()) {
        let region = affected_region(cloud, cam, opts, param.primitive);
        let x = param.get(cloud);
        let (_, base_sig) = linear_loss_extended::<DoubleDouble>(cloud, cam, weights, opts, None, region);
        let mut h = step_for(x, step);
        let mut numeric = None;
        for _ in 0..=KINK_RETRIES {
            let xd = DoubleDouble::from_f64(x);
            let hd = DoubleDouble::from_f64(h);
            let (lp, sp) = linear_loss_extended(cloud, cam, weights, opts, Some((param, xd + hd)), region);
            let (lm, sm) = linear_loss_extended(cloud, cam, weights, opts, Some((param, xd - hd)), region);
            if sp == base_sig && sm == base_sig {
                numeric = Some(((lp - lm) / (hd + hd)).to_f64());
                break;
            }
            h *= 0.1;
        }
        match numeric {
            Some(n) => report.record(param, param.analytic(&grads), n),
            None => report.skipped_nonsmooth += 1,
        }
    }
    Ok(report)
}

/// Central-difference check in `f64` for an arbitrary loss.
///
/// `loss_fn` maps a rendered image to `(loss, ∂loss/∂image)`.
pub fn finite_diff_check<F>(
    cloud: &GaussianCloud,
    cam: &Camera,
    opts: &RenderOptions,
    loss_fn: F,
    selector: &ParamSelector,
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&Image) -> (f64, Image),
{
    if !(step > 0.0) {
        return Err(Error::contract("finite-difference step must be positive"));
    }
    let forward = render_forward(cloud, cam, opts);
    let (_, dl) = loss_fn(&forward.color);
    let grads = render_backward(cloud, cam, &forward, &dl, opts)?;
    let zero = Image::new(cam.width, cam.height);
    let mut report = GradCheckReport::default();
    let mut work = cloud.clone();
    for param in selector.refs(cloud.len()) {
        let region = affected_region(cloud, cam, opts, param.primitive);
        let x = param.get(cloud);
        let (_, base_sig) = linear_loss_extended::<f64>(cloud, cam, &zero, opts, None, region);
        let mut h = step_for(x, step);
        let mut numeric = None;
        for _ in 0..=KINK_RETRIES {
            let (_, sp) = linear_loss_extended::<f64>(cloud, cam, &zero, opts, Some((param, x + h)), region);
            let (_, sm) = linear_loss_extended::<f64>(cloud, cam, &zero, opts, Some((param, x - h)), region);
            if sp == base_sig && sm == base_sig {
                let (xp, xm) = (x + h, x - h);
                param.set(&mut work, xp);
                let lp = loss_fn(&render_forward(&work, cam, opts).color).0;
                param.set(&mut work, xm);
                let lm = loss_fn(&render_forward(&work, cam, opts).color).0;
                param.set(&mut work, x);
                numeric = Some((lp - lm) / (xp - xm));
                break;
            }
            h *= 0.1;
        }
        match numeric {
            Some(n) => report.record(param, param.analytic(&grads), n),
            None => report.skipped_nonsmooth += 1,
        }
    }
    Ok(report)
}
