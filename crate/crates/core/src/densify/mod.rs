//! Adaptive density control: multi-view gradient statistics, densification
//! criteria, split/clone, re-activation (density-guided clone and needle
//! perturbation), pruning and opacity reset.

mod knn;
mod ops;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backward::ParamGradients;
use crate::error::{Error, Result};
use crate::render::PerGaussianViewStats;

pub use knn::{knn_mean_distance, knn_mean_distance_exhaustive, KnnDistance, KnnIndex};
pub use ops::{
    density_guided_clone, density_guided_offset, detect_needles, opacity_reset, perturb_needles, prune,
    select_and_densify, split_children, DensifyRngs, NEEDLE_RATIO_BOUND, SPLIT_CHILDREN, SPLIT_SCALE_DIVISOR,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Vanilla,
    Absgs,
    Pixelgs,
    Blursplit,
    React,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] =
        [StrategyKind::Vanilla, StrategyKind::Absgs, StrategyKind::Pixelgs, StrategyKind::Blursplit, StrategyKind::React];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::Absgs => "absgs",
            StrategyKind::Pixelgs => "pixelgs",
            StrategyKind::Blursplit => "blursplit",
            StrategyKind::React => "react",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownStrategy(s.to_string()))
    }
}

/// How the KNN mean distance parameterizes the clone offset distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgcStdMode {
    /// `d` is the per-axis variance: std = √d.
    #[default]
    CovLiteral,
    /// `d` is the per-axis standard deviation.
    StdLinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Gradient threshold in NDC units.
    pub tau_pos: f64,
    /// Image width `tau_pos` was tuned at. With a mean-reduced loss, the NDC
    /// gradient of a pixel-sized primitive scales as 1/width, so when set the
    /// threshold is rescaled by `reference / width`; `None` uses it as is.
    pub tau_reference_width: Option<u32>,
    /// Split/clone size boundary as a fraction of the scene extent.
    pub tau_size: f64,
    /// Blur-split pixel threshold; `None` means 1% of the image pixels.
    pub tau_blur: Option<u32>,
    pub tau_ns: f64,
    pub reactivation_enabled: bool,
    pub knn_k: usize,
    pub dgc_std_mode: DgcStdMode,
    pub nsp_interval: u64,
    pub min_opacity: f64,
    /// Largest allowed 3σ screen diameter as a fraction of the image side.
    pub max_screen_frac: f64,
    pub opacity_ceiling: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self::preset(StrategyKind::React)
    }
}

impl StrategyConfig {
    pub fn preset(kind: StrategyKind) -> Self {
        let tau_pos = match kind {
            StrategyKind::React => 3e-4,
            StrategyKind::Absgs => 4e-4,
            _ => 2e-4,
        };
        Self {
            kind,
            tau_pos,
            tau_reference_width: None,
            tau_size: 0.01,
            tau_blur: None,
            tau_ns: 0.8,
            reactivation_enabled: kind == StrategyKind::React,
            knn_k: 3,
            dgc_std_mode: DgcStdMode::CovLiteral,
            nsp_interval: 3000,
            min_opacity: 0.005,
            max_screen_frac: 0.5,
            opacity_ceiling: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::contract(m));
        if !(self.tau_pos > 0.0) {
            return bad(format!("tau_pos must be positive, got {}", self.tau_pos));
        }
        if self.tau_reference_width == Some(0) {
            return bad("tau_reference_width must be positive".into());
        }
        if !(self.tau_size > 0.0) {
            return bad(format!("tau_size must be positive, got {}", self.tau_size));
        }
        if !(self.tau_ns > 1.0 / 3.0 && self.tau_ns < 1.0) {
            return bad(format!("tau_ns must lie in (1/3, 1), got {}", self.tau_ns));
        }
        if self.knn_k == 0 {
            return bad("knn_k must be at least 1".into());
        }
        if self.nsp_interval == 0 {
            return bad("nsp_interval must be positive".into());
        }
        if !(0.0..1.0).contains(&self.opacity_ceiling) || self.opacity_ceiling == 0.0 {
            return bad(format!("opacity_ceiling must lie in (0, 1), got {}", self.opacity_ceiling));
        }
        Ok(())
    }

    /// Gradient threshold for images `image_width` pixels wide.
    pub fn position_threshold(&self, image_width: u32) -> f64 {
        match self.tau_reference_width {
            Some(r) => self.tau_pos * f64::from(r) / f64::from(image_width),
            None => self.tau_pos,
        }
    }

    pub fn blur_threshold(&self, image_pixels: usize) -> f64 {
        match self.tau_blur {
            Some(t) => f64::from(t),
            None => 0.01 * image_pixels as f64,
        }
    }
}

/// Per-primitive gradient statistics gathered across views between
/// densification steps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyAccumulator {
    pub sum_signed_norm: Vec<f64>,
    pub sum_abs_norm: Vec<f64>,
    pub sum_weighted_norm: Vec<f64>,
    pub sum_omega: Vec<f64>,
    pub sum_pixel_weighted_norm: Vec<f64>,
    pub sum_pixels: Vec<f64>,
    pub view_count: Vec<u32>,
    pub blur_count: Vec<u64>,
}

impl DensifyAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            sum_signed_norm: vec![0.0; n],
            sum_abs_norm: vec![0.0; n],
            sum_weighted_norm: vec![0.0; n],
            sum_omega: vec![0.0; n],
            sum_pixel_weighted_norm: vec![0.0; n],
            sum_pixels: vec![0.0; n],
            view_count: vec![0; n],
            blur_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.view_count.len()
    }

    pub fn is_empty(&self) -> bool {
        self.view_count.is_empty()
    }

    pub fn reset(&mut self, n: usize) {
        *self = Self::new(n);
    }

    /// Fold one view in with the default pixel factor `f ≡ 1`.
    pub fn accumulate_view(&mut self, grads: &ParamGradients, stats: &PerGaussianViewStats) {
        self.accumulate_view_with(grads, stats, |_| 1.0);
    }

    /// Fold one view in; `pixel_factor(i)` scales primitive `i`'s pixel weight.
    pub fn accumulate_view_with(
        &mut self,
        grads: &ParamGradients,
        stats: &PerGaussianViewStats,
        pixel_factor: impl Fn(usize) -> f64,
    ) {
        assert_eq!(grads.len(), self.len(), "gradient count does not match accumulator");
        assert_eq!(stats.len(), self.len(), "stats count does not match accumulator");
        for i in 0..self.len() {
            let m = stats.pixel_count[i];
            if m == 0 {
                continue;
            }
            let norm = grads.ndc_grad_signed[i].norm();
            let omega = stats.weight_sum[i] / f64::from(m);
            let mf = f64::from(m) * pixel_factor(i);
            self.sum_signed_norm[i] += norm;
            self.sum_abs_norm[i] += grads.ndc_grad_abs[i].norm();
            self.sum_weighted_norm[i] += omega * norm;
            self.sum_omega[i] += omega;
            self.sum_pixel_weighted_norm[i] += mf * norm;
            self.sum_pixels[i] += mf;
            self.view_count[i] += 1;
            self.blur_count[i] += u64::from(stats.max_weight_pixels[i]);
        }
    }

    /// Densification score of primitive `i`; 0 whenever the denominator is 0.
    pub fn criterion(&self, i: usize, kind: StrategyKind) -> f64 {
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
        let m = f64::from(self.view_count[i]);
        match kind {
            StrategyKind::Vanilla | StrategyKind::Blursplit => ratio(self.sum_signed_norm[i], m),
            StrategyKind::Absgs => ratio(self.sum_abs_norm[i], m),
            StrategyKind::Pixelgs => ratio(self.sum_pixel_weighted_norm[i], self.sum_pixels[i]),
            StrategyKind::React => ratio(self.sum_weighted_norm[i], self.sum_omega[i]),
        }
    }

    pub fn criterion_values(&self, kind: StrategyKind) -> Vec<f64> {
        (0..self.len()).map(|i| self.criterion(i, kind)).collect()
    }

    /// Mean per-view count of pixels where the primitive dominated.
    pub fn mean_blur_count(&self, i: usize) -> f64 {
        match self.view_count[i] {
            0 => 0.0,
            m => self.blur_count[i] as f64 / f64::from(m),
        }
    }
}

/// Where each primitive of a mutated cloud came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Kept(usize),
    Cloned(usize),
    SplitChild(usize),
}

impl Origin {
    /// Index in the previous cloud whose optimizer state carries over.
    pub fn surviving(self) -> Option<usize> {
        match self {
            Origin::Kept(i) => Some(i),
            _ => None,
        }
    }

    pub fn parent(self) -> usize {
        match self {
            Origin::Kept(i) | Origin::Cloned(i) | Origin::SplitChild(i) => i,
        }
    }
}

/// Outcome of one structural update.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DensifyReport {
    #[serde(default)]
    pub iteration: u64,
    pub split: usize,
    pub clone: usize,
    pub dgc_clone: usize,
    pub blur_split: usize,
    pub needle_perturbed: usize,
    pub pruned: usize,
    pub total: usize,
    /// New index → origin in the cloud before the update.
    #[serde(skip)]
    pub origins: Vec<Origin>,
}

impl DensifyReport {
    /// Report for an untouched cloud of `n` primitives.
    pub fn identity(n: usize) -> Self {
        Self { total: n, origins: (0..n).map(Origin::Kept).collect(), ..Self::default() }
    }

    /// Follow this update with a prune that kept `kept` (indices into this
    /// report's output).
    pub fn then_keep(&mut self, kept: &[usize]) {
        self.pruned += self.origins.len() - kept.len();
        self.origins = kept.iter().map(|&k| self.origins[k]).collect();
        self.total = self.origins.len();
    }
}

#[cfg(test)]
mod tests;
