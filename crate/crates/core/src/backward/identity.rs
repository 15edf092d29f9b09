//! The weight-factored form of the per-pixel position gradient.
//!
//! For one color channel, the product `∂c/∂α_i · ∂α_i/∂μ_x` can be written
//! either directly from the blending equation,
//!
//! ```text
//! [c_i Π_{j<i}(1-α_j) - Σ_{l>i} c_l α_l Π_{j<l, j≠i}(1-α_j)] · o_i G_i g'_x
//! ```
//!
//! or factored through the blend weight `ω_i = α_i Π_{j<i}(1-α_j)`:
//!
//! ```text
//! ω_i · [c_i - Σ_{l>i} c_l α_l Π_{j=i+1}^{l-1}(1-α_j)] · g'_x
//! ```
//!
//! The second form is what ties densification gradients to rendering weight.
//! Both are evaluated here by explicit products and compared.

use nalgebra::Vector2;
use serde::Serialize;

use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::gsmath::Camera;
use crate::render::{prepare, sample_alpha, RenderOptions, TRANSMITTANCE_MIN};

/// One blended primitive at a pixel, front to back.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StackEntry {
    pub opacity: f64,
    /// Gaussian value `G_i` at the pixel.
    pub gauss: f64,
    /// Single-channel color.
    pub color: f64,
    /// `∂G/∂μ_x / G`.
    pub g_prime: f64,
}

fn alpha(e: &StackEntry) -> f64 {
    e.opacity * e.gauss
}

/// Direct chain-rule form for entry `i`.
pub fn direct_form(stack: &[StackEntry], i: usize) -> f64 {
    let prod_except = |upto: usize| -> f64 {
        (0..upto).filter(|&j| j != i).map(|j| 1.0 - alpha(&stack[j])).product()
    };
    let mut dc_dalpha = stack[i].color * prod_except(i);
    for l in i + 1..stack.len() {
        dc_dalpha -= stack[l].color * alpha(&stack[l]) * prod_except(l);
    }
    let dalpha_dmu = stack[i].opacity * stack[i].gauss * stack[i].g_prime;
    dc_dalpha * dalpha_dmu
}

/// Weight-factored form for entry `i`.
pub fn weighted_form(stack: &[StackEntry], i: usize) -> f64 {
    let omega = alpha(&stack[i]) * (0..i).map(|j| 1.0 - alpha(&stack[j])).product::<f64>();
    let mut inner = stack[i].color;
    for l in i + 1..stack.len() {
        let between: f64 = (i + 1..l).map(|j| 1.0 - alpha(&stack[j])).product();
        inner -= stack[l].color * alpha(&stack[l]) * between;
    }
    omega * inner * stack[i].g_prime
}

/// Largest relative deviation between the two forms over the stack.
pub fn identity_deviation(stack: &[StackEntry]) -> f64 {
    (0..stack.len())
        .map(|i| {
            let (a, b) = (direct_form(stack, i), weighted_form(stack, i));
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Primitives blended at `pixel`, front to back, with their Gaussian values
/// and the `x`/`y` log-derivatives of the Gaussian.
pub fn pixel_stack(
    cloud: &GaussianCloud,
    cam: &Camera,
    pixel: Vector2<f64>,
    opts: &RenderOptions,
) -> Vec<(usize, f64, f64, Vector2<f64>)> {
    let prep = prepare(cloud, cam, opts);
    let mut out = Vec::new();
    let mut t = 1.0;
    for &id in &prep.order {
        let i = id as usize;
        let Some(s) = sample_alpha(&prep.splats[i], pixel.x, pixel.y) else {
            continue;
        };
        let t_next = t * (1.0 - s.alpha);
        if t_next < TRANSMITTANCE_MIN {
            break;
        }
        let [a, b, c] = prep.splats[i].conic;
        let gp = Vector2::new(a * s.dx + b * s.dy, b * s.dx + c * s.dy);
        out.push((i, prep.opacity[i], s.gauss, gp));
        t = t_next;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub contributors: usize,
    pub max_rel_deviation: f64,
}

/// Compares both forms for every contributor at `pixel`, for each color
/// channel and both screen axes.
pub fn verify_gradient_identity(
    cloud: &GaussianCloud,
    cam: &Camera,
    pixel: Vector2<f64>,
    opts: &RenderOptions,
) -> Result<IdentityReport> {
    let raw = pixel_stack(cloud, cam, pixel, opts);
    if raw.len() < 2 {
        return Err(Error::contract(format!("{} primitive(s) contribute at the pixel, need at least 2", raw.len())));
    }
    let mut worst: f64 = 0.0;
    for ch in 0..3 {
        for axis in 0..2 {
            let stack: Vec<StackEntry> = raw
                .iter()
                .map(|&(i, opacity, gauss, gp)| StackEntry { opacity, gauss, color: cloud.colors[i][ch], g_prime: gp[axis] })
                .collect();
            worst = worst.max(identity_deviation(&stack));
        }
    }
    Ok(IdentityReport { contributors: raw.len(), max_rel_deviation: worst })
}
