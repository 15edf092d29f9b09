use serde::Serialize;

use super::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Densify,
    OpacityReset,
    NeedlePerturb,
    Eval,
    Checkpoint,
}

/// Which structural and bookkeeping events fire after a given iteration.
/// Iterations are numbered from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub total: u64,
    pub densify_from: u64,
    pub densify_until: u64,
    pub densify_interval: u64,
    pub reset_interval: u64,
    pub needle_interval: Option<u64>,
    pub eval_interval: u64,
    pub checkpoints: Vec<u64>,
}

impl Schedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            total: cfg.total_iters,
            densify_from: cfg.densify_from,
            densify_until: cfg.densify_until,
            densify_interval: cfg.densify_interval,
            reset_interval: cfg.opacity_reset_interval,
            needle_interval: cfg.strategy.reactivation_enabled.then_some(cfg.strategy.nsp_interval),
            eval_interval: cfg.eval_interval,
            checkpoints: cfg.checkpoint_iters.clone(),
        }
    }

    pub fn in_densify_window(&self, it: u64) -> bool {
        it >= self.densify_from && it < self.densify_until
    }

    /// Events after iteration `it`, in execution order.
    pub fn events_at(&self, it: u64) -> Vec<EventKind> {
        let mut ev = Vec::new();
        if self.in_densify_window(it) && it % self.densify_interval == 0 {
            ev.push(EventKind::Densify);
        }
        if it < self.densify_until && it % self.reset_interval == 0 {
            ev.push(EventKind::OpacityReset);
        }
        if let Some(n) = self.needle_interval {
            if it < self.total && it % n == 0 {
                ev.push(EventKind::NeedlePerturb);
            }
        }
        if it == self.total || (self.eval_interval > 0 && it % self.eval_interval == 0) {
            ev.push(EventKind::Eval);
        }
        if self.checkpoints.contains(&it) {
            ev.push(EventKind::Checkpoint);
        }
        ev
    }

    /// Every event over the full run.
    pub fn dry_run(&self) -> Vec<(u64, EventKind)> {
        (1..=self.total).flat_map(|it| self.events_at(it).into_iter().map(move |e| (it, e))).collect()
    }
}
