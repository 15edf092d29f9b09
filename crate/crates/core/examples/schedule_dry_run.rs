//! List when each structural event fires under the full-length and the
//! desk-scale schedules.
//!
//! cargo run --release --example schedule_dry_run

use std::collections::BTreeMap;

use reactsplat::trainer::{EventKind, Schedule, TrainConfig};

fn main() {
    for (name, cfg) in [("paper", TrainConfig::paper()), ("desk", TrainConfig::desk())] {
        let mut by_kind: BTreeMap<EventKind, Vec<u64>> = BTreeMap::new();
        for (it, kind) in Schedule::from_config(&cfg).dry_run() {
            by_kind.entry(kind).or_default().push(it);
        }
        println!("{name} schedule ({} iterations):", cfg.total_iters);
        for (kind, its) in by_kind {
            let shown: Vec<String> = its.iter().take(6).map(u64::to_string).collect();
            let tail = if its.len() > 6 { format!(", …, {}", its[its.len() - 1]) } else { String::new() };
            println!("  {:<16} ×{:<4} at {}{tail}", format!("{kind:?}"), its.len(), shown.join(", "));
        }
    }
}
