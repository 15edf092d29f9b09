//! Compare analytic gradients with extended-precision central differences
//! on a few random scenes.
//!
//! cargo run --release --example gradient_check -- [scenes]

use reactsplat::backward::{gradcheck_linear_loss, GradCheckReport, ParamSelector};
use reactsplat::rng;
use reactsplat::scenesio::random::{random_scene, random_weights, RandomSceneSpec};
use reactsplat::RenderOptions;

fn main() -> reactsplat::Result<()> {
    let scenes: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let spec = RandomSceneSpec { primitives: 20, width: 32, height: 32, cameras: 1 };
    let mut total = GradCheckReport::default();
    for seed in 0..scenes {
        let (cloud, cams) = random_scene(seed, spec);
        let weights = random_weights(&mut rng::stream(seed, "weights"), spec.width, spec.height);
        let report =
            gradcheck_linear_loss(&cloud, &cams[0], &weights, &RenderOptions::default(), &ParamSelector::all(), 1e-6)?;
        println!(
            "scene {seed}: {} parameters checked, {} skipped at kinks, max relative error {:.2e}",
            report.checked, report.skipped_nonsmooth, report.max_rel_err
        );
        total.merge(report);
    }
    for (kind, err) in &total.max_rel_err_by_kind {
        println!("  {kind:<12} {err:.2e}");
    }
    if let Some(w) = &total.worst {
        println!("worst: {:?} analytic {:.6e} numeric {:.6e}", w.param, w.analytic, w.numeric);
    }
    Ok(())
}
