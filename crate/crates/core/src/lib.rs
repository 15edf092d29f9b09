//! CPU differentiable 3D Gaussian splatting with a pluggable adaptive density
//! control layer.
//!
//! The crate is organised bottom-up:
//!
//! - [`gsmath`]: activations, covariance construction and EWA projection.
//! - [`render`]: tiled front-to-back rasterizer, brute-force oracle renderer,
//!   per-primitive view statistics.
//! - [`backward`]: analytic gradients, extended-precision finite-difference
//!   checks and the weight-factored gradient identity.
//! - [`lossmetrics`]: L1 + D-SSIM loss, PSNR, SSIM.
//! - [`densify`]: gradient accumulation, the five densification criteria,
//!   split/clone, density-guided clone, needle-shape perturbation, pruning.
//! - [`trainer`]: Adam and the densification / re-activation schedule.
//! - [`scenesio`]: scene bundles, PLY checkpoints, synthetic scene presets.
//! - [`cli`]: the `reactsplat` command-line surface.

pub mod backward;
pub mod cli;
pub mod cloud;
pub mod densify;
pub mod error;
pub mod gsmath;
pub mod image;
pub mod lossmetrics;
pub mod render;
pub mod rng;
pub mod scenesio;
pub mod trainer;

pub use cloud::{Gaussian, GaussianCloud};
pub use error::{Error, Result};
pub use gsmath::{Camera, Projected2D};
pub use image::Image;
pub use render::{render_forward, oracle_render, RenderOptions, RenderOutput};
