//! Structure-of-arrays parameter store for 3D Gaussian primitives.

use nalgebra::{Vector3, Vector4};

use crate::gsmath::{logit, sigmoid};

/// One primitive in raw (optimizer-facing) parameterization.
///
/// Scale is stored as a log, opacity as a logit, rotation as an
/// unnormalized quaternion `(w, x, y, z)`. Color is flat RGB (SH degree 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub position: Vector3<f64>,
    pub raw_scale: Vector3<f64>,
    pub rotation: Vector4<f64>,
    pub raw_opacity: f64,
    pub color: Vector3<f64>,
}

impl Gaussian {
    pub fn isotropic(position: Vector3<f64>, scale: f64, opacity: f64, color: Vector3<f64>) -> Self {
        Self {
            position,
            raw_scale: Vector3::repeat(scale.ln()),
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            raw_opacity: logit(opacity),
            color,
        }
    }

    pub fn scale(&self) -> Vector3<f64> {
        self.raw_scale.map(f64::exp)
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.raw_opacity)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaussianCloud {
    pub positions: Vec<Vector3<f64>>,
    pub raw_scales: Vec<Vector3<f64>>,
    pub rotations: Vec<Vector4<f64>>,
    pub raw_opacities: Vec<f64>,
    pub colors: Vec<Vector3<f64>>,
}

impl GaussianCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            raw_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            raw_opacities: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.positions.push(g.position);
        self.raw_scales.push(g.raw_scale);
        self.rotations.push(g.rotation);
        self.raw_opacities.push(g.raw_opacity);
        self.colors.push(g.color);
    }

    pub fn get(&self, i: usize) -> Gaussian {
        Gaussian {
            position: self.positions[i],
            raw_scale: self.raw_scales[i],
            rotation: self.rotations[i],
            raw_opacity: self.raw_opacities[i],
            color: self.colors[i],
        }
    }

    pub fn set(&mut self, i: usize, g: Gaussian) {
        self.positions[i] = g.position;
        self.raw_scales[i] = g.raw_scale;
        self.rotations[i] = g.rotation;
        self.raw_opacities[i] = g.raw_opacity;
        self.colors[i] = g.color;
    }

    pub fn iter(&self) -> impl Iterator<Item = Gaussian> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn scale(&self, i: usize) -> Vector3<f64> {
        self.raw_scales[i].map(f64::exp)
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.raw_opacities[i])
    }

    /// New cloud holding the primitives at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(indices.len());
        for &i in indices {
            out.push(self.get(i));
        }
        out
    }

    /// Diagonal of the axis-aligned bounding box of all centers.
    pub fn bbox_diagonal(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (hi - lo).norm()
    }

    /// Round every parameter through `f32`, the checkpoint storage precision.
    pub fn quantize_f32(&mut self) {
        let q = |x: &mut f64| *x = f64::from(*x as f32);
        for v in self.positions.iter_mut() {
            v.iter_mut().for_each(q);
        }
        for v in self.raw_scales.iter_mut() {
            v.iter_mut().for_each(q);
        }
        for v in self.rotations.iter_mut() {
            v.iter_mut().for_each(q);
        }
        self.raw_opacities.iter_mut().for_each(q);
        for v in self.colors.iter_mut() {
            v.iter_mut().for_each(q);
        }
    }
}

impl FromIterator<Gaussian> for GaussianCloud {
    fn from_iter<T: IntoIterator<Item = Gaussian>>(iter: T) -> Self {
        let mut c = Self::new();
        for g in iter {
            c.push(g);
        }
        c
    }
}
