//! Analytic gradients of an image-space loss with respect to every primitive
//! parameter.
//!
//! The per-pixel kernel replays the forward compositing front to back. The
//! weight of everything behind primitive `i` (including the background) is
//! recovered as `pixel_color - prefix_i`, so no per-pixel per-primitive state
//! is stored between passes. Screen-space position gradients are also
//! reported in NDC units, both as a signed sum and as a sum of per-pixel
//! absolute values.

mod extended;
mod gradcheck;
mod identity;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;

use crate::cloud::GaussianCloud;
use crate::error::{Error, Result};
use crate::gsmath::{normalize_quaternion, unit_quaternion_to_matrix, Camera};
use crate::image::Image;
use crate::render::{
    prepare, sample_alpha, Prepared, RenderOptions, RenderOutput, Splat, TileBins, TRANSMITTANCE_MIN,
};

pub use extended::{linear_loss_extended, DoubleDouble, Real};
pub use gradcheck::{
    finite_diff_check, gradcheck_linear_loss, relative_error, GradCheckReport, ParamKind, ParamRef, ParamSelector,
    WorstEntry,
    REL_ERR_FLOOR,
};
pub use identity::{
    direct_form, identity_deviation, pixel_stack, verify_gradient_identity, weighted_form, IdentityReport, StackEntry,
};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGradients {
    pub d_position: Vec<Vector3<f64>>,
    pub d_raw_scale: Vec<Vector3<f64>>,
    pub d_rotation: Vec<Vector4<f64>>,
    pub d_raw_opacity: Vec<f64>,
    pub d_color: Vec<Vector3<f64>>,
    /// ∂L/∂μ2D in pixel units.
    pub d_mean2d: Vec<Vector2<f64>>,
    /// Σ_j ∂L_j/∂μ2D in NDC units.
    pub ndc_grad_signed: Vec<Vector2<f64>>,
    /// Σ_j |∂L_j/∂μ2D| componentwise, NDC units.
    pub ndc_grad_abs: Vec<Vector2<f64>>,
}

impl ParamGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_position: vec![Vector3::zeros(); n],
            d_raw_scale: vec![Vector3::zeros(); n],
            d_rotation: vec![Vector4::zeros(); n],
            d_raw_opacity: vec![0.0; n],
            d_color: vec![Vector3::zeros(); n],
            d_mean2d: vec![Vector2::zeros(); n],
            ndc_grad_signed: vec![Vector2::zeros(); n],
            ndc_grad_abs: vec![Vector2::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_position.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.d_position.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_raw_scale.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_rotation.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.d_raw_opacity.iter().all(|x| x.is_finite())
            && self.d_color.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Screen-space gradient partials for one primitive.
#[derive(Clone, Copy, Debug, Default)]
struct ScreenGrad {
    mean: Vector2<f64>,
    mean_abs: Vector2<f64>,
    /// ∂L/∂(a, b, c) of the conic `[[a, b], [b, c]]`.
    conic: Vector3<f64>,
    opacity: f64,
    color: Vector3<f64>,
}

impl ScreenGrad {
    fn merge(&mut self, o: &ScreenGrad) {
        self.mean += o.mean;
        self.mean_abs += o.mean_abs;
        self.conic += o.conic;
        self.opacity += o.opacity;
        self.color += o.color;
    }
}

fn backward_tile(prep: &Prepared, bins: &TileBins, t: usize, forward: &Image, dl: &Image) -> Vec<ScreenGrad> {
    let mut acc = vec![ScreenGrad::default(); bins.lists[t].len()];
    for block in bins.blocks(prep, t) {
        for py in block.y0..block.y1 {
            for px in block.x0..block.x1 {
                let p = (py * bins.width + px) as usize;
                let g = Vector3::new(dl.data[3 * p], dl.data[3 * p + 1], dl.data[3 * p + 2]);
                if g == Vector3::zeros() {
                    continue;
                }
                let pix = Vector3::new(forward.data[3 * p], forward.data[3 * p + 1], forward.data[3 * p + 2]);
                backward_pixel(&block.splats, &block.slots, &mut acc, f64::from(px), f64::from(py), &g, &pix);
            }
        }
    }
    acc
}

/// Replays one pixel front to back, adding each blended primitive's screen
/// gradients into `acc[slots[k]]`.
#[inline]
fn backward_pixel(
    splats: &[Splat],
    slots: &[u32],
    acc: &mut [ScreenGrad],
    fx: f64,
    fy: f64,
    g: &Vector3<f64>,
    pix: &Vector3<f64>,
) {
    let mut trans = 1.0;
    let mut prefix = Vector3::zeros();
    for (sp, &slot) in splats.iter().zip(slots) {
        let Some(s) = sample_alpha(sp, fx, fy) else {
            continue;
        };
        let t_next = trans * (1.0 - s.alpha);
        if t_next < TRANSMITTANCE_MIN {
            break;
        }
        let w = s.alpha * trans;
        let c = Vector3::from(sp.color);
        prefix += c * w;
        let a = &mut acc[slot as usize];
        a.color += g * w;
        if !s.clamped {
            let behind = (pix - prefix) / (1.0 - s.alpha);
            let d_alpha = g.dot(&(c * trans - behind));
            a.opacity += d_alpha * s.gauss;
            let d_gauss = d_alpha * sp.opacity * s.gauss;
            let [ca, cb, cc] = sp.conic;
            let gx = d_gauss * (ca * s.dx + cb * s.dy);
            let gy = d_gauss * (cb * s.dx + cc * s.dy);
            a.mean += Vector2::new(gx, gy);
            a.mean_abs += Vector2::new(gx.abs(), gy.abs());
            a.conic += Vector3::new(-0.5 * s.dx * s.dx, -s.dx * s.dy, -0.5 * s.dy * s.dy) * d_gauss;
        }
        trans = t_next;
    }
}

/// ∂L/∂q for `R(q̂)` given ∂L/∂R, with `q̂` a unit quaternion `(w, x, y, z)`.
fn rotation_matrix_grad(q: &Vector4<f64>, g: &Matrix3<f64>) -> Vector4<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let gw = 2.0 * (-z * g[(0, 1)] + y * g[(0, 2)] + z * g[(1, 0)] - x * g[(1, 2)] - y * g[(2, 0)] + x * g[(2, 1)]);
    let gx = 2.0
        * (y * g[(0, 1)] + z * g[(0, 2)] + y * g[(1, 0)] - 2.0 * x * g[(1, 1)] - w * g[(1, 2)] + z * g[(2, 0)]
            + w * g[(2, 1)]
            - 2.0 * x * g[(2, 2)]);
    let gy = 2.0
        * (-2.0 * y * g[(0, 0)] + x * g[(0, 1)] + w * g[(0, 2)] + x * g[(1, 0)] + z * g[(1, 2)] - w * g[(2, 0)]
            + z * g[(2, 1)]
            - 2.0 * y * g[(2, 2)]);
    let gz = 2.0
        * (-2.0 * z * g[(0, 0)] - w * g[(0, 1)] + x * g[(0, 2)] + w * g[(1, 0)] - 2.0 * z * g[(1, 1)]
            + y * g[(1, 2)]
            + x * g[(2, 0)]
            + y * g[(2, 1)]);
    Vector4::new(gw, gx, gy, gz)
}

/// Chain rule from screen space back to the raw parameters of primitive `i`.
fn lift_to_params(cloud: &GaussianCloud, cam: &Camera, prep: &Prepared, i: usize, sg: &ScreenGrad) -> Lifted {
    let proj = &prep.projected[i];
    let o = prep.opacity[i];
    let mut out = Lifted { raw_opacity: sg.opacity * o * (1.0 - o), color: sg.color, ..Lifted::default() };
    if !proj.valid || (sg.mean == Vector2::zeros() && sg.conic == Vector3::zeros()) {
        return out;
    }
    let t = proj.cam_point;
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;

    // mean2d = (fx x/z + cx, fy y/z + cy)
    let mut d_t = Vector3::new(
        sg.mean.x * cam.fx * iz,
        sg.mean.y * cam.fy * iz,
        -(sg.mean.x * cam.fx * t.x + sg.mean.y * cam.fy * t.y) * iz2,
    );

    // conic = Σ2⁻¹  ⇒  ∂L/∂Σ2 = -A·G·A with G the symmetric conic gradient
    let a = Matrix2::new(proj.conic.x, proj.conic.y, proj.conic.y, proj.conic.z);
    let g_conic = Matrix2::new(sg.conic.x, 0.5 * sg.conic.y, 0.5 * sg.conic.y, sg.conic.z);
    let d_cov2 = -(a * g_conic * a);

    let q = normalize_quaternion(&cloud.rotations[i]).expect("valid projection implies a usable rotation");
    let rot = unit_quaternion_to_matrix(&q);
    let scale = cloud.raw_scales[i].map(f64::exp);
    let m = rot * Matrix3::from_diagonal(&scale);
    let cov3 = m * m.transpose();

    // Σ2 = T Σ3 Tᵀ, T = J W
    let jac = cam.projection_jacobian(&t);
    let tmat = jac * cam.rotation;
    let d_cov3 = tmat.transpose() * d_cov2 * tmat;
    let d_tmat = 2.0 * d_cov2 * tmat * cov3;
    let d_jac = d_tmat * cam.rotation.transpose();
    let iz3 = iz2 * iz;
    d_t.x += d_jac[(0, 2)] * (-cam.fx * iz2);
    d_t.y += d_jac[(1, 2)] * (-cam.fy * iz2);
    d_t.z += d_jac[(0, 0)] * (-cam.fx * iz2)
        + d_jac[(0, 2)] * (2.0 * cam.fx * t.x * iz3)
        + d_jac[(1, 1)] * (-cam.fy * iz2)
        + d_jac[(1, 2)] * (2.0 * cam.fy * t.y * iz3);
    out.position = cam.rotation.transpose() * d_t;

    // Σ3 = M Mᵀ, M = R diag(s)
    let d_m = 2.0 * d_cov3 * m;
    let mut d_rot = Matrix3::zeros();
    for k in 0..3 {
        let col_dot: f64 = (0..3).map(|j| d_m[(j, k)] * rot[(j, k)]).sum();
        out.raw_scale[k] = col_dot * scale[k];
        for j in 0..3 {
            d_rot[(j, k)] = d_m[(j, k)] * scale[k];
        }
    }
    let d_qhat = rotation_matrix_grad(&q, &d_rot);
    let norm = cloud.rotations[i].norm();
    out.rotation = (d_qhat - q * q.dot(&d_qhat)) / norm;
    out
}

#[derive(Clone, Copy, Debug, Default)]
struct Lifted {
    position: Vector3<f64>,
    raw_scale: Vector3<f64>,
    rotation: Vector4<f64>,
    raw_opacity: f64,
    color: Vector3<f64>,
}

/// Gradients of a loss given its image gradient `dl_dimage`, for the view
/// whose forward pass produced `forward`.
pub fn render_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    forward: &RenderOutput,
    dl_dimage: &Image,
    opts: &RenderOptions,
) -> Result<ParamGradients> {
    if dl_dimage.width != cam.width || dl_dimage.height != cam.height || !forward.color.same_shape(dl_dimage) {
        return Err(Error::contract(format!(
            "loss gradient is {}x{}, camera is {}x{}",
            dl_dimage.width, dl_dimage.height, cam.width, cam.height
        )));
    }
    if forward.stats.len() != cloud.len() {
        return Err(Error::contract("forward pass was rendered from a different cloud"));
    }
    let prep = prepare(cloud, cam, opts);
    let bins = TileBins::build(&prep, cam.width, cam.height, opts.tile_size);
    let tiles: Vec<Vec<ScreenGrad>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|t| backward_tile(&prep, &bins, t, &forward.color, dl_dimage))
        .collect();
    let n = cloud.len();
    let mut screen = vec![ScreenGrad::default(); n];
    for (t, partial) in tiles.iter().enumerate() {
        for (slot, &id) in bins.lists[t].iter().enumerate() {
            screen[id as usize].merge(&partial[slot]);
        }
    }
    let lifted: Vec<Lifted> = (0..n)
        .into_par_iter()
        .map(|i| lift_to_params(cloud, cam, &prep, i, &screen[i]))
        .collect();

    let ndc = Vector2::new(0.5 * f64::from(cam.width), 0.5 * f64::from(cam.height));
    let mut grads = ParamGradients::zeros(n);
    for i in 0..n {
        let l = &lifted[i];
        grads.d_position[i] = l.position;
        grads.d_raw_scale[i] = l.raw_scale;
        grads.d_rotation[i] = l.rotation;
        grads.d_raw_opacity[i] = l.raw_opacity;
        grads.d_color[i] = l.color;
        grads.d_mean2d[i] = screen[i].mean;
        grads.ndc_grad_signed[i] = screen[i].mean.component_mul(&ndc);
        grads.ndc_grad_abs[i] = screen[i].mean_abs.component_mul(&ndc);
    }
    Ok(grads)
}

#[cfg(test)]
mod tests;
