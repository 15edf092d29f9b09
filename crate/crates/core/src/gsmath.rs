//! Activations, covariance construction and camera projection.
//!
//! Conventions: cameras follow the pinhole model with `x` right, `y` down and
//! `z` forward in camera space. Pixel `(px, py)` is sampled at its integer
//! coordinates, so a principal point of `(W/2, H/2)` lands on a pixel center.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3, Vector4};

use crate::cloud::Gaussian;
use crate::error::{Error, Result};

/// Added to both diagonal entries of every screen-space covariance.
pub const LOW_PASS: f64 = 0.3;

/// A primitive touches a pixel only inside its 3σ ellipse.
pub const SUPPORT_MAHALANOBIS_SQ: f64 = 9.0;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Unit quaternion of `q = (w, x, y, z)`; fails on a zero-norm input.
pub fn normalize_quaternion(q: &Vector4<f64>) -> Result<Vector4<f64>> {
    let n = q.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    Ok(q / n)
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn unit_quaternion_to_matrix(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Σ = R·diag(s)²·Rᵀ with `s = exp(raw_scale)` and `R` from the normalized quaternion.
pub fn build_covariance(raw_scale: &Vector3<f64>, q: &Vector4<f64>) -> Result<Matrix3<f64>> {
    let r = unit_quaternion_to_matrix(&normalize_quaternion(q)?);
    let m = r * Matrix3::from_diagonal(&raw_scale.map(f64::exp));
    Ok(m * m.transpose())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
    pub near: f64,
}

impl Camera {
    pub const DEFAULT_NEAR: f64 = 0.01;

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        near: f64,
    ) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height, rotation, translation, near };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, principal point at the image center.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        let z = (target - eye).try_normalize(1e-12).ok_or_else(|| Error::InvalidCamera("eye equals target".into()))?;
        let down = -up;
        let x = down
            .cross(&z)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up vector parallel to view direction".into()))?;
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            focal,
            focal,
            f64::from(width) / 2.0,
            f64::from(height) / 2.0,
            width,
            height,
            rotation,
            translation,
            Self::DEFAULT_NEAR,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::InvalidCamera(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return err("zero image dimension");
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return err("focal lengths must be positive");
        }
        if !(self.near > 0.0) {
            return err("near plane must be positive");
        }
        let dev = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if !(dev <= 1e-9) {
            return err("rotation is not orthonormal");
        }
        if !self.translation.iter().chain(self.rotation.iter()).all(|v| v.is_finite()) {
            return err("non-finite pose");
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Perspective Jacobian of `(fx·x/z + cx, fy·y/z + cy)` at camera point `t`.
    pub fn projection_jacobian(&self, t: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / t.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * t.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * t.y * iz2,
        )
    }
}

/// Screen-space footprint of a primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected2D {
    pub mean: Vector2<f64>,
    /// Screen covariance including the low-pass floor.
    pub cov: Matrix2<f64>,
    /// Inverse covariance packed as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: Vector3<f64>,
    pub depth: f64,
    /// Mean in camera coordinates.
    pub cam_point: Vector3<f64>,
    pub valid: bool,
}

impl Projected2D {
    fn invalid(cam_point: Vector3<f64>) -> Self {
        Self {
            mean: Vector2::zeros(),
            cov: Matrix2::identity(),
            conic: Vector3::new(1.0, 0.0, 1.0),
            depth: cam_point.z,
            cam_point,
            valid: false,
        }
    }

    /// Half extents of the axis-aligned box enclosing the 3σ ellipse.
    pub fn support_half_extent(&self) -> Vector2<f64> {
        let k = SUPPORT_MAHALANOBIS_SQ.sqrt();
        Vector2::new(k * self.cov[(0, 0)].sqrt(), k * self.cov[(1, 1)].sqrt())
    }

    /// Largest 3σ radius of the ellipse.
    pub fn support_radius(&self) -> f64 {
        let (a, b, c) = (self.cov[(0, 0)], self.cov[(0, 1)], self.cov[(1, 1)]);
        let mid = 0.5 * (a + c);
        let lambda_max = mid + (mid * mid - (a * c - b * b)).max(0.0).sqrt();
        SUPPORT_MAHALANOBIS_SQ.sqrt() * lambda_max.sqrt()
    }

    #[inline]
    pub fn mahalanobis_sq(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean.x;
        let dy = py - self.mean.y;
        self.conic.x * dx * dx + 2.0 * self.conic.y * dx * dy + self.conic.z * dy * dy
    }
}

/// Screen covariance `J·W·Σ·Wᵀ·Jᵀ` before the low-pass floor.
pub fn screen_covariance(cov3: &Matrix3<f64>, cam: &Camera, cam_point: &Vector3<f64>) -> Matrix2<f64> {
    let t = cam.projection_jacobian(cam_point) * cam.rotation;
    t * cov3 * t.transpose()
}

pub fn project_gaussian_with(g: &Gaussian, cam: &Camera, low_pass: f64) -> Projected2D {
    let cam_point = cam.world_to_camera(&g.position);
    if cam_point.z <= cam.near {
        return Projected2D::invalid(cam_point);
    }
    let Ok(cov3) = build_covariance(&g.raw_scale, &g.rotation) else {
        return Projected2D::invalid(cam_point);
    };
    let mut cov = screen_covariance(&cov3, cam, &cam_point);
    // exact symmetry keeps the conic symmetric
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(0, 1)] = off;
    cov[(1, 0)] = off;
    cov[(0, 0)] += low_pass;
    cov[(1, 1)] += low_pass;
    let det = cov[(0, 0)] * cov[(1, 1)] - off * off;
    if !(det > 0.0) || !det.is_finite() {
        return Projected2D::invalid(cam_point);
    }
    let inv = 1.0 / det;
    let iz = 1.0 / cam_point.z;
    Projected2D {
        mean: Vector2::new(cam.fx * cam_point.x * iz + cam.cx, cam.fy * cam_point.y * iz + cam.cy),
        cov,
        conic: Vector3::new(cov[(1, 1)] * inv, -off * inv, cov[(0, 0)] * inv),
        depth: cam_point.z,
        cam_point,
        valid: true,
    }
}

/// EWA projection with the default low-pass floor.
pub fn project_gaussian(g: &Gaussian, cam: &Camera) -> Projected2D {
    project_gaussian_with(g, cam, LOW_PASS)
}

/// `exp(-½ (p-μ)ᵀ Σ⁻¹ (p-μ))`.
#[inline]
pub fn eval_gaussian_2d(p: &Vector2<f64>, proj: &Projected2D) -> f64 {
    debug_assert!(proj.valid, "evaluating an invalid projection");
    (-0.5 * proj.mahalanobis_sq(p.x, p.y)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_quat(seed: [f64; 4]) -> Vector4<f64> {
        Vector4::from(seed).normalize()
    }

    #[test]
    fn identity_covariance() {
        let c = build_covariance(&Vector3::zeros(), &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(c, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn axis_scaled_covariance() {
        let c = build_covariance(&Vector3::new(2f64.ln(), 0.0, 0.0), &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(c, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)), epsilon = 1e-14);
    }

    #[test]
    fn zero_quaternion_is_degenerate() {
        assert!(matches!(
            build_covariance(&Vector3::zeros(), &Vector4::zeros()),
            Err(Error::DegenerateRotation)
        ));
    }

    #[test]
    fn eigenvalues_match_squared_scales() {
        let q = random_quat([0.3, -0.7, 0.2, 0.55]);
        let c = build_covariance(&Vector3::new(3f64.ln(), 2f64.ln(), 0.0), &q).unwrap();
        let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], 1.0, epsilon = 1e-10);
        assert_relative_eq!(ev[1], 4.0, epsilon = 1e-10);
        assert_relative_eq!(ev[2], 9.0, epsilon = 1e-10);
    }

    fn axis_camera(f: f64) -> Camera {
        Camera::new(f, f, 32.0, 32.0, 64, 64, Matrix3::identity(), Vector3::zeros(), 0.1).unwrap()
    }

    /// Numerical Jacobian of the exact pinhole map, independent of the analytic one.
    fn numeric_screen_cov(cov3: &Matrix3<f64>, cam: &Camera, t: &Vector3<f64>) -> Matrix2<f64> {
        let proj = |p: &Vector3<f64>| Vector2::new(cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy);
        let h = 1e-6;
        let mut j = Matrix2x3::zeros();
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let d = (proj(&(t + e)) - proj(&(t - e))) / (2.0 * h);
            j.set_column(k, &d);
        }
        let tw = j * cam.rotation;
        tw * cov3 * tw.transpose()
    }

    #[test]
    fn on_axis_isotropic_projection() {
        let (f, sigma, z) = (50.0, 0.2, 4.0);
        let cam = axis_camera(f);
        let g = Gaussian::isotropic(Vector3::new(0.0, 0.0, z), sigma, 0.5, Vector3::zeros());
        let p = project_gaussian_with(&g, &cam, 0.0);
        let expect = (f * sigma / z).powi(2);
        assert_relative_eq!(p.cov, Matrix2::identity() * expect, epsilon = 1e-8);
        let cov3 = build_covariance(&g.raw_scale, &g.rotation).unwrap();
        let numeric = numeric_screen_cov(&cov3, &cam, &p.cam_point);
        assert_relative_eq!(p.cov, numeric, epsilon = 1e-6);
        assert_relative_eq!(p.mean, Vector2::new(32.0, 32.0), epsilon = 1e-12);
    }

    #[test]
    fn off_axis_matches_numeric_jacobian() {
        let cam = Camera::look_at(
            Vector3::new(1.0, -2.0, -5.0),
            Vector3::new(0.1, 0.2, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            60.0,
            64,
            48,
        )
        .unwrap();
        let g = Gaussian {
            position: Vector3::new(0.4, -0.3, 0.5),
            raw_scale: Vector3::new(-1.0, -2.0, -1.5),
            rotation: Vector4::new(0.9, 0.1, -0.3, 0.2),
            raw_opacity: 0.0,
            color: Vector3::zeros(),
        };
        let p = project_gaussian_with(&g, &cam, 0.0);
        let cov3 = build_covariance(&g.raw_scale, &g.rotation).unwrap();
        let numeric = numeric_screen_cov(&cov3, &cam, &p.cam_point);
        assert_relative_eq!(p.cov, numeric, max_relative = 1e-7);
    }

    #[test]
    fn behind_near_plane_is_invalid() {
        let cam = axis_camera(50.0);
        let g = Gaussian::isotropic(Vector3::new(0.0, 0.0, 0.1), 0.2, 0.5, Vector3::zeros());
        assert!(!project_gaussian(&g, &cam).valid);
        let g = Gaussian::isotropic(Vector3::new(0.0, 0.0, -3.0), 0.2, 0.5, Vector3::zeros());
        assert!(!project_gaussian(&g, &cam).valid);
    }

    #[test]
    fn rigid_translation_invariance() {
        let cam = Camera::look_at(Vector3::new(0.5, 0.2, -4.0), Vector3::zeros(), Vector3::y(), 40.0, 32, 32).unwrap();
        let offset = Vector3::new(3.0, -1.5, 7.25);
        let mut moved = cam.clone();
        moved.translation = cam.translation - cam.rotation * offset;
        let mut g = Gaussian::isotropic(Vector3::new(0.1, 0.3, 0.2), 0.3, 0.5, Vector3::zeros());
        g.raw_scale = Vector3::new(-1.0, -0.5, -2.0);
        g.rotation = Vector4::new(0.5, 0.5, 0.1, -0.2);
        let a = project_gaussian(&g, &cam);
        g.position += offset;
        let b = project_gaussian(&g, &moved);
        assert_relative_eq!(a.mean, b.mean, epsilon = 1e-10);
        assert_relative_eq!(a.cov, b.cov, epsilon = 1e-10);
        assert_relative_eq!(a.depth, b.depth, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_eval_cases() {
        let cam = axis_camera(50.0);
        let g = Gaussian::isotropic(Vector3::new(0.0, 0.0, 4.0), 0.2, 0.5, Vector3::zeros());
        let mut p = project_gaussian(&g, &cam);
        assert_eq!(eval_gaussian_2d(&p.mean, &p), 1.0);
        p.cov = Matrix2::identity();
        p.conic = Vector3::new(1.0, 0.0, 1.0);
        let q = p.mean + Vector2::new(1.0, 1.0);
        assert_relative_eq!(eval_gaussian_2d(&q, &p), (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_eval_matches_explicit_inverse() {
        let cam = axis_camera(50.0);
        let mut g = Gaussian::isotropic(Vector3::new(0.2, -0.1, 3.0), 0.2, 0.5, Vector3::zeros());
        g.raw_scale = Vector3::new(-1.0, -2.5, -1.7);
        g.rotation = Vector4::new(0.3, 0.8, -0.2, 0.4);
        let p = project_gaussian(&g, &cam);
        let inv = p.cov.try_inverse().unwrap();
        for (x, y) in [(30.0, 31.0), (35.5, 28.0), (40.0, 40.0)] {
            let d = Vector2::new(x, y) - p.mean;
            let expect = (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp();
            assert_relative_eq!(eval_gaussian_2d(&Vector2::new(x, y), &p), expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn depth_is_camera_z() {
        let cam = Camera::look_at(Vector3::new(1.0, 2.0, -3.0), Vector3::zeros(), Vector3::y(), 40.0, 32, 32).unwrap();
        let g = Gaussian::isotropic(Vector3::new(0.3, -0.2, 0.1), 0.1, 0.5, Vector3::zeros());
        let p = project_gaussian(&g, &cam);
        assert_eq!(p.depth, (cam.rotation * g.position + cam.translation).z);
    }

    proptest! {
        #[test]
        fn quaternion_sign_flip_invariance(w in -1.0..1.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64, z in -1.0..1.0f64,
                                           s0 in -3.0..1.0f64, s1 in -3.0..1.0f64, s2 in -3.0..1.0f64) {
            let q = Vector4::new(w, x, y, z);
            prop_assume!(q.norm() > 1e-3);
            let s = Vector3::new(s0, s1, s2);
            let a = build_covariance(&s, &q).unwrap();
            let b = build_covariance(&s, &(-q)).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((a - a.transpose()).abs().max() <= 1e-15 * a.abs().max());
        }

        #[test]
        fn gaussian_monotone_along_rays(dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
            let cam = axis_camera(50.0);
            let mut g = Gaussian::isotropic(Vector3::new(0.1, 0.0, 3.0), 0.2, 0.5, Vector3::zeros());
            g.raw_scale = Vector3::new(-1.0, -2.0, -1.5);
            g.rotation = Vector4::new(0.7, 0.2, 0.1, 0.3);
            let p = project_gaussian(&g, &cam);
            let mut last = f64::INFINITY;
            for k in 0..40 {
                let t = k as f64 * 0.5;
                let v = eval_gaussian_2d(&(p.mean + Vector2::new(dx, dy) * t), &p);
                prop_assert!(v <= last);
                last = v;
            }
        }
    }
}
