//! Deterministic synthetic scenes: a dense reference cloud renders the ground
//! truth, and a 5% subsample of its centers seeds training.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Vector3, Vector4};
use rand::Rng;

use super::{save_checkpoint, save_points, CameraRecord, CamerasFile, ScenePoint, Split, CAMERAS_FILE, POINTS_FILE, REFERENCE_FILE};
use crate::cloud::{Gaussian, GaussianCloud};
use crate::error::{Error, Result};
use crate::gsmath::{logit, Camera};
use crate::render::{oracle_render, RenderOptions};
use crate::rng::{self, StreamRng};

pub const INIT_FRACTION: f64 = 0.05;
const SIZE: u32 = 128;
const VIEWS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticPreset {
    /// Finely textured plane: blur-prone high-frequency content.
    HighFrequencyPlane,
    /// Textured shell seen from all sides, initialized very sparsely.
    SparseInit,
    /// Smooth backdrop with dense thin blades near the frame corners.
    CornerGrass,
}

impl SyntheticPreset {
    pub const ALL: [SyntheticPreset; 3] =
        [SyntheticPreset::HighFrequencyPlane, SyntheticPreset::SparseInit, SyntheticPreset::CornerGrass];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticPreset::HighFrequencyPlane => "high-frequency-plane",
            SyntheticPreset::SparseInit => "sparse-init",
            SyntheticPreset::CornerGrass => "corner-grass",
        }
    }
}

impl fmt::Display for SyntheticPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| Error::UnknownPreset(s.to_string()))
    }
}

fn flat(position: Vector3<f64>, sx: f64, sy: f64, sz: f64, rotation: Vector4<f64>, opacity: f64, color: Vector3<f64>) -> Gaussian {
    Gaussian {
        position,
        raw_scale: Vector3::new(sx.ln(), sy.ln(), sz.ln()),
        rotation,
        raw_opacity: logit(opacity),
        color: color.map(|c| c.clamp(0.0, 1.0)),
    }
}

const IDENTITY_ROT: Vector4<f64> = Vector4::new(1.0, 0.0, 0.0, 0.0);

fn plane(r: &mut StreamRng) -> GaussianCloud {
    let n = 56;
    let half = 1.2;
    let h = 2.0 * half / n as f64;
    let mut cloud = GaussianCloud::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = -half + (i as f64 + 0.5) * h;
            let y = -half + (j as f64 + 0.5) * h;
            let checker = ((i / 2 + j / 2) % 2) as f64;
            let tint = Vector3::new(0.9, 0.6 + 0.3 * (x * 1.7).sin().abs(), 0.4 + 0.4 * (y * 2.3).cos().abs());
            let noise = Vector3::from_fn(|_, _| r.random_range(-0.08..0.08));
            let color = tint * (0.15 + 0.7 * checker) + noise;
            cloud.push(flat(Vector3::new(x, y, 0.0), 0.6 * h, 0.6 * h, 0.1 * h, IDENTITY_ROT, 0.95, color));
        }
    }
    cloud
}

fn shell(r: &mut StreamRng) -> GaussianCloud {
    let n = 3000;
    let radius = 0.8;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut cloud = GaussianCloud::with_capacity(n);
    for k in 0..n {
        let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
        let rr = (1.0 - y * y).sqrt();
        let phi = golden * k as f64;
        let dir = Vector3::new(rr * phi.cos(), y, rr * phi.sin());
        let stripes = 0.5 + 0.5 * (9.0 * phi.rem_euclid(std::f64::consts::TAU) + 14.0 * y).sin();
        let color = Vector3::new(0.2 + 0.7 * stripes, 0.3 + 0.5 * (1.0 - y) * 0.5, 0.8 - 0.6 * stripes)
            + Vector3::from_fn(|_, _| r.random_range(-0.05..0.05));
        let rot = Vector4::from_fn(|_, _| r.random_range(-1.0..1.0));
        let s = 0.035;
        cloud.push(flat(dir * radius, s, s, 0.3 * s, rot, 0.9, color));
    }
    cloud
}

fn grass(r: &mut StreamRng) -> GaussianCloud {
    let mut cloud = GaussianCloud::new();
    let n = 20;
    let h = 2.4 / n as f64;
    for j in 0..n {
        for i in 0..n {
            let x = -1.2 + (i as f64 + 0.5) * h;
            let y = -1.2 + (j as f64 + 0.5) * h;
            let color = Vector3::new(0.55 + 0.2 * (x * 1.3).cos(), 0.5 + 0.1 * y, 0.35);
            cloud.push(flat(Vector3::new(x, y, 0.5), 0.7 * h, 0.7 * h, 0.05 * h, IDENTITY_ROT, 0.98, color));
        }
    }
    for (cx, cy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        for _ in 0..300 {
            let x = cx * r.random_range(0.6..1.15);
            let y = cy * r.random_range(0.6..1.15);
            let lean: f64 = r.random_range(-0.3..0.3);
            let rot = Vector4::new((lean / 2.0).cos(), 0.0, 0.0, (lean / 2.0).sin());
            let shade = r.random_range(0.0..1.0);
            let color = Vector3::new(0.1 + 0.3 * shade, 0.45 + 0.45 * shade, 0.05 + 0.1 * shade);
            cloud.push(flat(Vector3::new(x, y, 0.4 - r.random_range(0.0..0.1)), 0.006, 0.06, 0.006, rot, 0.9, color));
        }
    }
    cloud
}

/// Dense reference cloud of `preset`, rounded to checkpoint precision.
pub fn reference_cloud(preset: SyntheticPreset, seed: u64) -> GaussianCloud {
    let mut r = rng::stream(seed, rng::SCENE);
    let mut cloud = match preset {
        SyntheticPreset::HighFrequencyPlane => plane(&mut r),
        SyntheticPreset::SparseInit => shell(&mut r),
        SyntheticPreset::CornerGrass => grass(&mut r),
    };
    cloud.quantize_f32();
    cloud
}

/// The ten 128×128 views every scene of `preset` is rendered from.
pub fn preset_cameras(preset: SyntheticPreset) -> Result<Vec<Camera>> {
    (0..VIEWS)
        .map(|k| {
            let t = k as f64 / (VIEWS - 1) as f64;
            let elev: f64 = if k % 2 == 0 { 0.12 } else { -0.12 };
            let (eye, focal) = match preset {
                SyntheticPreset::HighFrequencyPlane => {
                    let az = (-30.0 + 60.0 * t).to_radians();
                    (Vector3::new(az.sin() * elev.cos(), elev.sin(), -az.cos() * elev.cos()) * 3.0, 140.0)
                }
                SyntheticPreset::SparseInit => {
                    let az = std::f64::consts::TAU * k as f64 / VIEWS as f64;
                    (Vector3::new(az.sin() * elev.cos(), 2.0 * elev.sin(), -az.cos() * elev.cos()) * 3.2, 128.0)
                }
                SyntheticPreset::CornerGrass => {
                    let az = (-15.0 + 30.0 * t).to_radians();
                    (Vector3::new(az.sin() * elev.cos(), 0.5 * elev.sin(), -az.cos() * elev.cos()) * 3.0, 192.0)
                }
            };
            Camera::look_at(eye, Vector3::zeros(), Vector3::y(), focal, SIZE, SIZE)
        })
        .collect()
}

/// Writes a complete scene directory for `preset` under `out_dir` and
/// returns `out_dir`.
pub fn generate_synthetic_scene(preset: SyntheticPreset, seed: u64, out_dir: &Path) -> Result<PathBuf> {
    let reference = reference_cloud(preset, seed);
    let cams = preset_cameras(preset)?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    let opts = RenderOptions::default();
    let mut records = Vec::with_capacity(cams.len());
    for (k, cam) in cams.iter().enumerate() {
        let rel = format!("images/view_{k:03}.png");
        oracle_render(&reference, cam, &opts).color.save_png(&out_dir.join(&rel))?;
        let split = if k % super::TEST_EVERY == 0 { Split::Test } else { Split::Train };
        records.push(CameraRecord::from_camera(k, cam, rel, Some(split)));
    }
    CamerasFile { cameras: records }.save(&out_dir.join(CAMERAS_FILE))?;
    save_checkpoint(&reference, &out_dir.join(REFERENCE_FILE))?;

    let count = (INIT_FRACTION * reference.len() as f64).floor() as usize;
    let mut r = rng::stream(seed, "init-subsample");
    let mut picked = rand::seq::index::sample(&mut r, reference.len(), count).into_vec();
    picked.sort_unstable();
    let points: Vec<ScenePoint> = picked
        .iter()
        .map(|&i| ScenePoint {
            position: reference.positions[i],
            color: reference.colors[i].map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8).into(),
        })
        .collect();
    save_points(&points, &out_dir.join(POINTS_FILE))?;
    Ok(out_dir.to_path_buf())
}
