use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::densify::{StrategyConfig, StrategyKind};
use crate::error::{Error, Result};
use crate::lossmetrics::LossConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub position_init: f64,
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { position_init: 1.6e-4, position_final: 1.6e-6, scale: 5e-3, rotation: 1e-3, opacity: 5e-2, color: 2.5e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub total_iters: u64,
    pub densify_from: u64,
    /// Exclusive end of the densification window.
    pub densify_until: u64,
    pub densify_interval: u64,
    pub opacity_reset_interval: u64,
    pub lr: LearningRates,
    pub seed: u64,
    pub strategy: StrategyConfig,
    pub loss: LossConfig,
    /// Held-out evaluation cadence; 0 evaluates only after the last iteration.
    pub eval_interval: u64,
    /// Metrics cadence of the JSONL stream.
    pub log_interval: u64,
    pub checkpoint_iters: Vec<u64>,
    pub background: [f64; 3],
    pub tile_size: u32,
}

/// Image width the stock gradient thresholds correspond to.
pub const DESK_TAU_REFERENCE_WIDTH: u32 = 1024;

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Desk-scale schedule: 5000 iterations, densify 100→2500 every 50,
    /// opacity reset and needle perturbation every 500. Gradient thresholds
    /// are rescaled from the width of full-size captures.
    pub fn desk() -> Self {
        let mut strategy = StrategyConfig::preset(StrategyKind::React);
        strategy.nsp_interval = 500;
        strategy.tau_reference_width = Some(DESK_TAU_REFERENCE_WIDTH);
        Self {
            total_iters: 5000,
            densify_from: 100,
            densify_until: 2500,
            densify_interval: 50,
            opacity_reset_interval: 500,
            lr: LearningRates::default(),
            seed: 0,
            strategy,
            loss: LossConfig::default(),
            eval_interval: 1000,
            log_interval: 100,
            checkpoint_iters: Vec::new(),
            background: [0.0; 3],
            tile_size: crate::render::DEFAULT_TILE_SIZE,
        }
    }

    /// Full-length schedule: 30k iterations, densify 500→15000 every 100,
    /// opacity reset and needle perturbation every 3000.
    pub fn paper() -> Self {
        let mut strategy = StrategyConfig::preset(StrategyKind::React);
        strategy.nsp_interval = 3000;
        Self {
            total_iters: 30_000,
            densify_from: 500,
            densify_until: 15_000,
            densify_interval: 100,
            opacity_reset_interval: 3000,
            eval_interval: 7000,
            strategy,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// Switch strategy kind, keeping the schedule-related strategy fields.
    pub fn with_strategy(mut self, kind: StrategyKind) -> Self {
        let StrategyConfig { nsp_interval, tau_reference_width, .. } = self.strategy;
        self.strategy = StrategyConfig { nsp_interval, tau_reference_width, ..StrategyConfig::preset(kind) };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::contract(m));
        if self.total_iters == 0 {
            return bad("total_iters must be positive");
        }
        if self.densify_from > self.densify_until || self.densify_until > self.total_iters {
            return bad("expected densify_from <= densify_until <= total_iters");
        }
        if self.densify_interval == 0 || self.opacity_reset_interval == 0 || self.log_interval == 0 {
            return bad("intervals must be positive");
        }
        if self.tile_size == 0 {
            return bad("tile_size must be positive");
        }
        self.strategy.validate()?;
        self.loss.validate()
    }
}

/// Overlay `patch` onto `base`, recursing into objects.
fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn config_error(e: serde_json::Error) -> Error {
    Error::Config { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parse a JSON config; missing keys take desk defaults, unknown keys fail.
///
/// Keys are layered over the desk preset, so a partial `strategy` object
/// keeps the desk schedule and takes the remaining thresholds from the
/// preset of the `kind` it names.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    // strict pass first: reports syntax errors and unknown keys with positions
    serde_json::from_str::<TrainConfig>(text).map_err(config_error)?;
    let given: Value = serde_json::from_str(text).map_err(config_error)?;
    let mut base = TrainConfig::desk();
    if let Some(kind) = given.pointer("/strategy/kind") {
        base = base.with_strategy(serde_json::from_value::<StrategyKind>(kind.clone())?);
    }
    let mut merged = serde_json::to_value(&base)?;
    merge_json(&mut merged, given);
    let cfg: TrainConfig = serde_json::from_value(merged)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Apply a `dotted.key=value` override. The value is read as JSON when it
/// parses, else as a string.
pub fn apply_override(cfg: &TrainConfig, assignment: &str) -> Result<TrainConfig> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::Override(assignment.to_string()))?;
    let mut root = serde_json::to_value(cfg)?;
    let mut slot = &mut root;
    for part in key.trim().split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| Error::Override(format!("{assignment}: unknown key `{key}`")))?;
    }
    *slot = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let out: TrainConfig =
        serde_json::from_value(root).map_err(|e| Error::Override(format!("{assignment}: {e}")))?;
    out.validate()?;
    Ok(out)
}
