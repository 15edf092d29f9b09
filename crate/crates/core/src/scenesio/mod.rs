//! Scene directories, checkpoint PLY files and synthetic scene generation.
//!
//! A scene directory holds `cameras.json`, the images it references and a
//! `points.ply` with the initial point cloud.

mod ply;
pub mod random;
mod synthetic;

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsmath::Camera;
use crate::image::Image;

pub use ply::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, load_points, points_bytes, points_from_bytes,
    save_checkpoint, save_points, ScenePoint, CHECKPOINT_PROPERTIES,
};
pub use synthetic::{generate_synthetic_scene, preset_cameras, reference_cloud, SyntheticPreset, INIT_FRACTION};

pub const CAMERAS_FILE: &str = "cameras.json";
pub const POINTS_FILE: &str = "points.ply";
pub const REFERENCE_FILE: &str = "reference.ply";
/// Default hold-out cadence: every 8th view is a test view.
pub const TEST_EVERY: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One entry of `cameras.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRecord {
    pub id: usize,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl CameraRecord {
    pub fn from_camera(id: usize, cam: &Camera, image: String, split: Option<Split>) -> Self {
        let r = cam.rotation;
        Self {
            id,
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            image,
            split,
        }
    }

    pub fn camera(&self) -> Result<Camera> {
        Camera::new(
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation),
            Camera::DEFAULT_NEAR,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CamerasFile {
    pub cameras: Vec<CameraRecord>,
}

impl CamerasFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(std::fs::write(path, text)?)
    }
}

/// A loaded, validated scene.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub root: PathBuf,
    pub cameras: Vec<Camera>,
    /// Ground-truth image of each camera.
    pub images: Vec<Image>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub initial_points: Vec<ScenePoint>,
    /// Bounding-box diagonal of the initial points.
    pub scene_extent: f64,
}

impl SceneBundle {
    pub fn train_views(&self) -> impl Iterator<Item = (&Camera, &Image)> + '_ {
        self.train.iter().map(|&i| (&self.cameras[i], &self.images[i]))
    }

    pub fn test_views(&self) -> impl Iterator<Item = (&Camera, &Image)> + '_ {
        self.test.iter().map(|&i| (&self.cameras[i], &self.images[i]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoadOptions {
    /// Views without an explicit split go to test when `index % test_every == 0`.
    pub test_every: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { test_every: TEST_EVERY }
    }
}

pub fn bbox_diagonal(points: impl IntoIterator<Item = Vector3<f64>>) -> f64 {
    let mut it = points.into_iter();
    let Some(first) = it.next() else { return 0.0 };
    let (lo, hi) = it.fold((first, first), |(lo, hi), p| (lo.inf(&p), hi.sup(&p)));
    (hi - lo).norm()
}

pub fn load_scene(dir: &Path) -> Result<SceneBundle> {
    load_scene_with(dir, LoadOptions::default())
}

pub fn load_scene_with(dir: &Path, opts: LoadOptions) -> Result<SceneBundle> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    if opts.test_every == 0 {
        return Err(Error::contract("test_every must be positive"));
    }
    let records = CamerasFile::load(&dir.join(CAMERAS_FILE))?.cameras;
    let mut cameras = Vec::with_capacity(records.len());
    let mut images = Vec::with_capacity(records.len());
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, rec) in records.iter().enumerate() {
        let cam = rec.camera()?;
        let img = Image::load_png(&dir.join(&rec.image))?;
        if img.width != cam.width || img.height != cam.height {
            return Err(Error::DimensionMismatch {
                what: rec.image.clone(),
                expected_w: cam.width,
                expected_h: cam.height,
                found_w: img.width,
                found_h: img.height,
            });
        }
        let split = rec.split.unwrap_or(if k % opts.test_every == 0 { Split::Test } else { Split::Train });
        match split {
            Split::Train => train.push(k),
            Split::Test => test.push(k),
        }
        cameras.push(cam);
        images.push(img);
    }
    let initial_points = load_points(&dir.join(POINTS_FILE))?;
    if initial_points.is_empty() {
        return Err(Error::EmptyInit);
    }
    let scene_extent = bbox_diagonal(initial_points.iter().map(|p| p.position));
    Ok(SceneBundle { root: dir.to_path_buf(), cameras, images, train, test, initial_points, scene_extent })
}
