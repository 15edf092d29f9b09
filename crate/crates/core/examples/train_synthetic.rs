//! Generate a synthetic scene and train it with one strategy, streaming the
//! log as it goes.
//!
//! cargo run --release --example train_synthetic -- [preset] [strategy] [iters] [tau-reference-width]

use std::time::Instant;

use reactsplat::densify::StrategyKind;
use reactsplat::scenesio::{generate_synthetic_scene, load_scene, SyntheticPreset};
use reactsplat::trainer::{train_with, MetricsRecord, TrainConfig, TrainObserver};

struct Printer(Instant);

impl TrainObserver for Printer {
    fn record(&mut self, rec: &MetricsRecord) -> reactsplat::Result<()> {
        let eval = match (rec.psnr, rec.ssim) {
            (Some(p), Some(s)) => format!("  psnr {p:.2}  ssim {s:.3}"),
            _ => String::new(),
        };
        let densify = rec.densify_report.as_ref().map_or(String::new(), |r| {
            format!("  (+{} split, +{} clone, -{} pruned)", r.split, r.clone + r.dgc_clone, r.pruned)
        });
        println!(
            "[{:>6.1}s] iter {:>5}  loss {:.4}  primitives {:>6}{eval}{densify}",
            self.0.elapsed().as_secs_f64(),
            rec.iter,
            rec.loss,
            rec.n_primitives
        );
        Ok(())
    }
}

fn main() -> reactsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let preset: SyntheticPreset = args.first().map_or("high-frequency-plane", String::as_str).parse()?;
    let kind: StrategyKind = args.get(1).map_or("react", String::as_str).parse()?;
    let iters: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);

    let dir = std::env::temp_dir().join(format!("reactsplat-example-{preset}"));
    generate_synthetic_scene(preset, 0, &dir)?;
    let scene = load_scene(&dir)?;

    let mut cfg = TrainConfig::desk().with_strategy(kind);
    cfg.total_iters = iters;
    cfg.densify_until = cfg.densify_until.min(iters);
    cfg.eval_interval = (iters / 5).max(1);
    if let Some(w) = args.get(3).and_then(|s| s.parse().ok()) {
        cfg.strategy.tau_reference_width = Some(w);
    }

    let start = Instant::now();
    let out = train_with(&scene, &cfg, &mut Printer(start))?;
    let eval = out.final_eval.map_or(String::from("no test views"), |e| format!("psnr {:.2}, ssim {:.3}", e.psnr, e.ssim));
    println!("{kind} on {preset}: {eval}, {} primitives, {:.1}s", out.cloud.len(), start.elapsed().as_secs_f64());
    Ok(())
}
