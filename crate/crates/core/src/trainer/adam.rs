//! Adam with one moment buffer per parameter group.

use nalgebra::SVector;

use crate::backward::ParamGradients;
use crate::cloud::GaussianCloud;
use crate::densify::Origin;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// First/second moments of one parameter group, `width` scalars per primitive.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub width: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(width: usize, n: usize) -> Self {
        Self { width, m: vec![0.0; width * n], v: vec![0.0; width * n] }
    }

    pub fn len(&self) -> usize {
        self.m.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn clear(&mut self, i: usize) {
        let r = i * self.width..(i + 1) * self.width;
        self.m[r.clone()].fill(0.0);
        self.v[r].fill(0.0);
    }

    fn remap(&self, origins: &[Origin]) -> Self {
        let mut out = Self::zeros(self.width, origins.len());
        for (new, o) in origins.iter().enumerate() {
            if let Some(old) = o.surviving() {
                let (src, dst) = (old * self.width, new * self.width);
                out.m[dst..dst + self.width].copy_from_slice(&self.m[src..src + self.width]);
                out.v[dst..dst + self.width].copy_from_slice(&self.v[src..src + self.width]);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { beta1: BETA1, beta2: BETA2, eps: EPSILON }
    }
}

impl Hyper {
    fn corrections(&self, step: u64) -> (f64, f64) {
        (1.0 - self.beta1.powi(step as i32), 1.0 - self.beta2.powi(step as i32))
    }

    fn update_scalar(&self, p: &mut f64, g: f64, mo: &mut Moments, k: usize, lr: f64, bc: (f64, f64)) {
        let m = self.beta1 * mo.m[k] + (1.0 - self.beta1) * g;
        let v = self.beta2 * mo.v[k] + (1.0 - self.beta2) * g * g;
        mo.m[k] = m;
        mo.v[k] = v;
        *p -= lr * (m / bc.0) / ((v / bc.1).sqrt() + self.eps);
    }

    /// One bias-corrected Adam update of a flat parameter slice in place.
    pub fn update(&self, params: &mut [f64], grads: &[f64], mo: &mut Moments, lr: f64, step: u64) {
        let bc = self.corrections(step);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.update_scalar(p, *g, mo, k, lr, bc);
        }
    }

    fn update_vectors<const W: usize>(
        &self,
        params: &mut [SVector<f64, W>],
        grads: &[SVector<f64, W>],
        mo: &mut Moments,
        lr: f64,
        step: u64,
    ) {
        let bc = self.corrections(step);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            for c in 0..W {
                self.update_scalar(&mut p[c], g[c], mo, i * W + c, lr, bc);
            }
        }
    }
}

/// Learning rates of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub hyper: Hyper,
    pub step: u64,
    pub position: Moments,
    pub scale: Moments,
    pub rotation: Moments,
    pub opacity: Moments,
    pub color: Moments,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            hyper: Hyper::default(),
            step: 0,
            position: Moments::zeros(3, n),
            scale: Moments::zeros(3, n),
            rotation: Moments::zeros(4, n),
            opacity: Moments::zeros(1, n),
            color: Moments::zeros(3, n),
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity.is_empty()
    }

    /// Apply one step to every group; colors are clamped back into `[0, 1]`.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &ParamGradients, lr: &StepRates) {
        assert_eq!(cloud.len(), self.len(), "optimizer state does not match the cloud");
        self.step += 1;
        let (h, t) = (self.hyper, self.step);
        h.update_vectors(&mut cloud.positions, &grads.d_position, &mut self.position, lr.position, t);
        h.update_vectors(&mut cloud.raw_scales, &grads.d_raw_scale, &mut self.scale, lr.scale, t);
        h.update_vectors(&mut cloud.rotations, &grads.d_rotation, &mut self.rotation, lr.rotation, t);
        h.update(&mut cloud.raw_opacities, &grads.d_raw_opacity, &mut self.opacity, lr.opacity, t);
        h.update_vectors(&mut cloud.colors, &grads.d_color, &mut self.color, lr.color, t);
        for c in cloud.colors.iter_mut() {
            c.apply(|x| *x = x.clamp(0.0, 1.0));
        }
    }

    /// Carry moments across a structural update: survivors keep theirs, new
    /// primitives start from zero.
    pub fn resize(&self, origins: &[Origin]) -> Self {
        Self {
            hyper: self.hyper,
            step: self.step,
            position: self.position.remap(origins),
            scale: self.scale.remap(origins),
            rotation: self.rotation.remap(origins),
            opacity: self.opacity.remap(origins),
            color: self.color.remap(origins),
        }
    }
}

/// `resize` as a free function.
pub fn resize_optimizer(state: &AdamState, origins: &[Origin]) -> AdamState {
    state.resize(origins)
}
