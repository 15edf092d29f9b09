use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use crate::rng::StreamRng;
use rand_distr::StandardNormal;

use super::{DensifyAccumulator, DensifyReport, DgcStdMode, KnnIndex, Origin, StrategyConfig, StrategyKind};
use crate::cloud::{Gaussian, GaussianCloud};
use crate::gsmath::{logit, normalize_quaternion, project_gaussian, unit_quaternion_to_matrix, Camera};
use crate::rng;

pub const SPLIT_CHILDREN: usize = 2;
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;
/// Upper bound on max/Σ scale after a needle perturbation.
pub const NEEDLE_RATIO_BOUND: f64 = 2.0 / 3.0;

/// Independent random streams for split sampling and clone offsets.
pub struct DensifyRngs {
    pub split: StreamRng,
    pub dgc: StreamRng,
}

impl DensifyRngs {
    pub fn from_seed(seed: u64) -> Self {
        Self { split: rng::stream(seed, rng::SPLIT), dgc: rng::stream(seed, rng::DGC) }
    }
}

fn normal3<R: Rng>(r: &mut R) -> Vector3<f64> {
    let x: f64 = r.sample(StandardNormal);
    let y: f64 = r.sample(StandardNormal);
    let z: f64 = r.sample(StandardNormal);
    Vector3::new(x, y, z)
}

fn rotation_or_identity(g: &Gaussian) -> Matrix3<f64> {
    normalize_quaternion(&g.rotation).map(|q| unit_quaternion_to_matrix(&q)).unwrap_or_else(|_| Matrix3::identity())
}

/// Two children drawn from the parent's 3D density, each shrunk by 1.6.
pub fn split_children<R: Rng>(g: &Gaussian, r: &mut R) -> [Gaussian; SPLIT_CHILDREN] {
    let rot = rotation_or_identity(g);
    let s = g.scale();
    let shrink = SPLIT_SCALE_DIVISOR.ln();
    std::array::from_fn(|_| {
        let z = normal3(r);
        let offset = rot * s.component_mul(&z);
        Gaussian { position: g.position + offset, raw_scale: g.raw_scale.add_scalar(-shrink), ..*g }
    })
}

/// Offset for a density-guided clone of a primitive whose KNN mean distance is `d`.
pub fn density_guided_offset<R: Rng>(d: f64, mode: DgcStdMode, r: &mut R) -> Vector3<f64> {
    let std = match mode {
        DgcStdMode::CovLiteral => d.max(0.0).sqrt(),
        DgcStdMode::StdLinear => d.max(0.0),
    };
    if std == 0.0 {
        return Vector3::zeros();
    }
    normal3(r) * std
}

/// Copy of `g` displaced by a density-guided offset.
pub fn density_guided_clone<R: Rng>(g: &Gaussian, d: f64, mode: DgcStdMode, r: &mut R) -> Gaussian {
    Gaussian { position: g.position + density_guided_offset(d, mode, r), ..*g }
}

/// Split or clone every primitive whose criterion exceeds the position
/// threshold for `image` (width, height); under
/// blur-split also split primitives that dominate too many pixels.
///
/// The output keeps unsplit primitives in order, then appends clones, then
/// split children.
pub fn select_and_densify(
    cloud: &GaussianCloud,
    acc: &DensifyAccumulator,
    cfg: &StrategyConfig,
    scene_extent: f64,
    image: (u32, u32),
    rngs: &mut DensifyRngs,
) -> (GaussianCloud, DensifyReport) {
    assert_eq!(cloud.len(), acc.len(), "accumulator does not match the cloud");
    let n = cloud.len();
    let size_limit = cfg.tau_size * scene_extent;
    let blur_limit = cfg.blur_threshold(image.0 as usize * image.1 as usize);
    let tau = cfg.position_threshold(image.0);
    let mut report = DensifyReport::default();
    let mut split = vec![false; n];
    let mut clone = vec![false; n];
    for i in 0..n {
        let big = cloud.scale(i).max() > size_limit;
        if acc.criterion(i, cfg.kind) > tau {
            if big {
                split[i] = true;
                report.split += 1;
            } else {
                clone[i] = true;
            }
        }
        if cfg.kind == StrategyKind::Blursplit && !split[i] && acc.mean_blur_count(i) > blur_limit {
            split[i] = true;
            clone[i] = false;
            report.blur_split += 1;
        }
    }

    let guided = cfg.reactivation_enabled;
    let knn = guided.then(|| KnnIndex::from_cloud(cloud));
    let mut out = GaussianCloud::with_capacity(n + clone.len());
    for i in (0..n).filter(|&i| !split[i]) {
        out.push(cloud.get(i));
        report.origins.push(Origin::Kept(i));
    }
    for i in (0..n).filter(|&i| clone[i]) {
        let g = cloud.get(i);
        let c = match &knn {
            Some(index) => {
                report.dgc_clone += 1;
                let d = index.mean_distance(i, cfg.knn_k).mean;
                density_guided_clone(&g, d, cfg.dgc_std_mode, &mut rngs.dgc)
            }
            None => {
                report.clone += 1;
                g
            }
        };
        out.push(c);
        report.origins.push(Origin::Cloned(i));
    }
    for i in (0..n).filter(|&i| split[i]) {
        for child in split_children(&cloud.get(i), &mut rngs.split) {
            out.push(child);
            report.origins.push(Origin::SplitChild(i));
        }
    }
    report.total = out.len();
    (out, report)
}

fn needle_ratio(s: &Vector3<f64>) -> f64 {
    s.max() / s.sum()
}

/// Primitives whose largest activated scale exceeds `tau_ns` of the scale sum.
pub fn detect_needles(cloud: &GaussianCloud, tau_ns: f64) -> Vec<usize> {
    (0..cloud.len()).filter(|&i| needle_ratio(&cloud.scale(i)) > tau_ns).collect()
}

/// Widen the two shorter axes of each flagged primitive by `½·max/mid`.
pub fn perturb_needles(cloud: &mut GaussianCloud, flagged: &[usize]) -> usize {
    for &i in flagged {
        let s = cloud.scale(i);
        let long = s.imax();
        let mut rest: Vec<f64> = (0..3).filter(|&a| a != long).map(|a| s[a]).collect();
        rest.sort_by(f64::total_cmp);
        let degree = s[long] / rest[1];
        let grow = (0.5 * degree).ln();
        for a in (0..3).filter(|&a| a != long) {
            cloud.raw_scales[i][a] += grow;
        }
    }
    flagged.len()
}

/// Drop near-transparent primitives and, if `max_screen_frac` is given,
/// primitives whose 3σ footprint is too wide in any camera. Returns the
/// pruned cloud and the surviving indices.
pub fn prune(
    cloud: &GaussianCloud,
    min_opacity: f64,
    max_screen_frac: Option<f64>,
    cams: &[Camera],
) -> (GaussianCloud, Vec<usize>) {
    let too_wide = |g: &Gaussian| {
        max_screen_frac.is_some_and(|frac| {
            cams.iter().any(|cam| {
                let p = project_gaussian(g, cam);
                p.valid && 2.0 * p.support_radius() > frac * f64::from(cam.width.max(cam.height))
            })
        })
    };
    let kept: Vec<usize> =
        (0..cloud.len()).filter(|&i| !(cloud.opacity(i) < min_opacity) && !too_wide(&cloud.get(i))).collect();
    (cloud.gather(&kept), kept)
}

/// Clamp activated opacity to at most `ceiling`; returns how many changed.
pub fn opacity_reset(cloud: &mut GaussianCloud, ceiling: f64) -> usize {
    let raw_ceiling = logit(ceiling);
    let mut changed = 0;
    for o in cloud.raw_opacities.iter_mut() {
        if *o > raw_ceiling {
            *o = raw_ceiling;
            changed += 1;
        }
    }
    changed
}
