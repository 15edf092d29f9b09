//! Seeded random clouds and camera rigs for tests and diagnostics.

use nalgebra::{Vector3, Vector4};
use rand::Rng;

use crate::cloud::{Gaussian, GaussianCloud};
use crate::gsmath::Camera;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSceneSpec {
    pub primitives: usize,
    pub width: u32,
    pub height: u32,
    pub cameras: usize,
}

/// Random primitives inside `[-1, 1]³`.
pub fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> GaussianCloud {
    (0..n)
        .map(|_| Gaussian {
            position: Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            raw_scale: Vector3::from_fn(|_, _| rng.random_range(-2.6..-1.2)),
            rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            raw_opacity: rng.random_range(-2.0..2.5),
            color: Vector3::from_fn(|_, _| rng.random_range(0.0..1.0)),
        })
        .collect()
}

/// Cameras on a jittered ring of radius ~4 looking at the origin.
pub fn ring_cameras<R: Rng>(rng: &mut R, count: usize, width: u32, height: u32) -> Vec<Camera> {
    (0..count)
        .map(|k| {
            let theta = std::f64::consts::TAU * (k as f64 + rng.random_range(0.0..0.5)) / count as f64;
            let r = rng.random_range(3.6..4.4);
            let eye = Vector3::new(r * theta.cos(), rng.random_range(-1.0..1.0), r * theta.sin());
            let target = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
            Camera::look_at(eye, target, Vector3::y(), 1.1 * f64::from(width), width, height)
                .expect("ring camera is well-formed")
        })
        .collect()
}

pub fn random_scene(seed: u64, spec: RandomSceneSpec) -> (GaussianCloud, Vec<Camera>) {
    let mut r = rng::stream(seed, "random-scene");
    let cloud = random_cloud(&mut r, spec.primitives);
    let cams = ring_cameras(&mut r, spec.cameras, spec.width, spec.height);
    (cloud, cams)
}

/// Image with entries uniform in `[-1, 1]`, used as a linear loss gradient.
pub fn random_weights<R: Rng>(rng: &mut R, width: u32, height: u32) -> crate::image::Image {
    let mut img = crate::image::Image::new(width, height);
    img.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    img
}
