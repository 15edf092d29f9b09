//! Accumulate per-view gradient statistics over several views and compare
//! the densification score of every strategy.
//!
//! cargo run --release --example densify_criteria

use reactsplat::backward::render_backward;
use reactsplat::densify::{DensifyAccumulator, StrategyConfig, StrategyKind};
use reactsplat::rng;
use reactsplat::scenesio::random::{random_scene, random_weights, RandomSceneSpec};
use reactsplat::{render_forward, RenderOptions};

fn main() -> reactsplat::Result<()> {
    let spec = RandomSceneSpec { primitives: 200, width: 64, height: 64, cameras: 6 };
    let (cloud, cams) = random_scene(5, spec);
    let opts = RenderOptions::default();
    let mut acc = DensifyAccumulator::new(cloud.len());
    let mut r = rng::stream(5, "weights");
    for cam in &cams {
        let fwd = render_forward(&cloud, cam, &opts);
        let dl = random_weights(&mut r, cam.width, cam.height);
        // a mean-reduced loss scales the image gradient by 1/(3·W·H)
        let scale = 1.0 / (3.0 * f64::from(cam.width * cam.height));
        let dl = reactsplat::Image { data: dl.data.iter().map(|v| v * scale).collect(), ..dl };
        let grads = render_backward(&cloud, cam, &fwd, &dl, &opts)?;
        acc.accumulate_view(&grads, &fwd.stats);
    }

    println!("{:<10} {:>12} {:>12} {:>10}", "strategy", "mean score", "threshold", "selected");
    for kind in StrategyKind::ALL {
        let cfg = StrategyConfig::preset(kind);
        let values = acc.criterion_values(kind);
        let visible: Vec<f64> = values.iter().copied().filter(|&v| v > 0.0).collect();
        let mean = visible.iter().sum::<f64>() / visible.len().max(1) as f64;
        let tau = cfg.position_threshold(spec.width);
        let selected = values.iter().filter(|&&v| v > tau).count();
        println!("{:<10} {:>12.3e} {:>12.1e} {:>10}", kind.name(), mean, tau, selected);
    }

    // react weights each view by the primitive's mean blend weight there, so
    // views where it is mostly occluded count for little
    let i = (0..cloud.len()).max_by_key(|&i| acc.view_count[i]).unwrap_or(0);
    println!(
        "primitive {i}: seen in {} views, vanilla {:.3e}, absgs {:.3e}, react {:.3e}",
        acc.view_count[i],
        acc.criterion(i, StrategyKind::Vanilla),
        acc.criterion(i, StrategyKind::Absgs),
        acc.criterion(i, StrategyKind::React)
    );
    Ok(())
}
