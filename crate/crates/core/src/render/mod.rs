//! Front-to-back α-blending rasterizer.
//!
//! [`render_forward`] bins primitives into screen tiles and composites each
//! tile in parallel; [`oracle_render`] walks every primitive for every pixel.
//! Both share [`sample_alpha`] and the termination rule, so their colors agree
//! bit for bit. Per-primitive weight sums use an order-independent fixed-point
//! accumulator, which makes statistics exact regardless of tile size or
//! thread count.

mod fixed;
mod oracle;
mod tiles;

use rayon::prelude::*;

use crate::cloud::GaussianCloud;
use crate::gsmath::{project_gaussian_with, Camera, Projected2D, LOW_PASS, SUPPORT_MAHALANOBIS_SQ};
use crate::image::Image;

pub use fixed::FixedSum;
pub use oracle::oracle_render;
pub use tiles::render_forward;
pub(crate) use tiles::TileBins;

/// Per-pixel opacity is clamped to this value.
pub const ALPHA_MAX: f64 = 0.99;
/// A primitive that would drop transmittance below this is not blended and
/// ends the pixel.
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
pub const DEFAULT_TILE_SIZE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    pub background: [f64; 3],
    pub tile_size: u32,
    pub low_pass: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { background: [0.0; 3], tile_size: DEFAULT_TILE_SIZE, low_pass: LOW_PASS }
    }
}

impl RenderOptions {
    pub fn with_background(background: [f64; 3]) -> Self {
        Self { background, ..Self::default() }
    }
}

/// Per-primitive statistics of one view.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerGaussianViewStats {
    /// Pixels the primitive was blended into (`m_i^k`).
    pub pixel_count: Vec<u32>,
    /// Sum of its blend weights over those pixels.
    pub weight_sum: Vec<f64>,
    /// Pixels where its weight was the largest among all contributors.
    pub max_weight_pixels: Vec<u32>,
}

impl PerGaussianViewStats {
    pub fn zeros(n: usize) -> Self {
        Self { pixel_count: vec![0; n], weight_sum: vec![0.0; n], max_weight_pixels: vec![0; n] }
    }

    pub fn len(&self) -> usize {
        self.pixel_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count.is_empty()
    }

    /// Mean blend weight over covered pixels, 0 for invisible primitives.
    pub fn mean_weight(&self, i: usize) -> f64 {
        match self.pixel_count[i] {
            0 => 0.0,
            m => self.weight_sum[i] / f64::from(m),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    /// α-blended camera depth; 0 where nothing was blended.
    pub depth: Vec<f64>,
    pub final_transmittance: Vec<f64>,
    /// Σ ω per pixel (equals `1 - final_transmittance` up to rounding).
    pub weight_total: Vec<f64>,
    pub stats: PerGaussianViewStats,
}

impl RenderOutput {
    pub fn width(&self) -> u32 {
        self.color.width
    }

    pub fn height(&self) -> u32 {
        self.color.height
    }
}

/// Everything the compositing loops read about one primitive, packed so a
/// tile's candidates sit contiguously in memory.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Splat {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
}

/// Projection and depth ordering shared by every pass over a view.
pub(crate) struct Prepared {
    pub projected: Vec<Projected2D>,
    pub opacity: Vec<f64>,
    pub splats: Vec<Splat>,
    /// Valid primitives sorted by depth, ties broken by index.
    pub order: Vec<u32>,
}

impl Prepared {
    /// Splats of `ids`, in the given order.
    pub fn gather(&self, ids: &[u32]) -> Vec<Splat> {
        ids.iter().map(|&id| self.splats[id as usize]).collect()
    }
}

pub(crate) fn prepare(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> Prepared {
    let projected: Vec<Projected2D> = (0..cloud.len())
        .into_par_iter()
        .map(|i| project_gaussian_with(&cloud.get(i), cam, opts.low_pass))
        .collect();
    let opacity: Vec<f64> = (0..cloud.len()).map(|i| cloud.opacity(i)).collect();
    let splats = projected
        .iter()
        .zip(&opacity)
        .zip(&cloud.colors)
        .map(|((p, &o), c)| Splat {
            mean: [p.mean.x, p.mean.y],
            conic: [p.conic.x, p.conic.y, p.conic.z],
            opacity: o,
            color: [c.x, c.y, c.z],
            depth: p.depth,
        })
        .collect();
    let mut order: Vec<u32> = (0..cloud.len() as u32).filter(|&i| projected[i as usize].valid).collect();
    order.sort_by(|&a, &b| {
        projected[a as usize]
            .depth
            .total_cmp(&projected[b as usize].depth)
            .then(a.cmp(&b))
    });
    Prepared { projected, opacity, splats, order }
}

/// One primitive evaluated at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Sample {
    pub alpha: f64,
    /// Unclamped Gaussian value.
    pub gauss: f64,
    pub clamped: bool,
    pub dx: f64,
    pub dy: f64,
}

/// Opacity contribution of a primitive at pixel `(px, py)`, `None` outside
/// its 3σ support or when it contributes nothing.
#[inline]
pub(crate) fn sample_alpha(sp: &Splat, px: f64, py: f64) -> Option<Sample> {
    let dx = px - sp.mean[0];
    let dy = py - sp.mean[1];
    let maha = sp.conic[0] * dx * dx + 2.0 * sp.conic[1] * dx * dy + sp.conic[2] * dy * dy;
    if !(maha <= SUPPORT_MAHALANOBIS_SQ) {
        return None;
    }
    let gauss = (-0.5 * maha).exp();
    let raw = sp.opacity * gauss;
    if !(raw > 0.0) {
        return None;
    }
    let clamped = raw > ALPHA_MAX;
    Some(Sample { alpha: if clamped { ALPHA_MAX } else { raw }, gauss, clamped, dx, dy })
}

/// Accumulated result of compositing one pixel.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct PixelResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub transmittance: f64,
    pub weight_total: f64,
}

/// Composites `candidates` (depth-ordered splats) at one pixel, reporting
/// each blended slot with its weight to `visit`. Returns the pixel result and
/// the slot of the max-weight contributor, if any.
#[inline]
pub(crate) fn composite_pixel<F>(
    candidates: &[Splat],
    px: f64,
    py: f64,
    background: &[f64; 3],
    mut visit: F,
) -> (PixelResult, Option<usize>)
where
    F: FnMut(usize, f64),
{
    let mut t = 1.0;
    let mut out = PixelResult::default();
    let mut best: Option<(usize, f64)> = None;
    for (slot, sp) in candidates.iter().enumerate() {
        let Some(s) = sample_alpha(sp, px, py) else {
            continue;
        };
        let t_next = t * (1.0 - s.alpha);
        if t_next < TRANSMITTANCE_MIN {
            break;
        }
        let w = s.alpha * t;
        out.color[0] += sp.color[0] * w;
        out.color[1] += sp.color[1] * w;
        out.color[2] += sp.color[2] * w;
        out.depth += sp.depth * w;
        out.weight_total += w;
        if best.is_none_or(|(_, bw)| w > bw) {
            best = Some((slot, w));
        }
        visit(slot, w);
        t = t_next;
    }
    for (c, b) in out.color.iter_mut().zip(background) {
        *c += t * b;
    }
    out.transmittance = t;
    (out, best.map(|(slot, _)| slot))
}

/// α-blended depth map.
pub fn render_depth(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> Vec<f64> {
    render_forward(cloud, cam, opts).depth
}

#[cfg(test)]
mod tests;
