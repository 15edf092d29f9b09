//! The position gradient of a composited pixel can be written either by the
//! plain chain rule through every transmittance factor or factored by the
//! primitive's blend weight. This example evaluates both forms on random
//! per-pixel stacks and on a pixel of a rendered scene.
//!
//! cargo run --release --example gradient_identity

use nalgebra::Vector2;
use reactsplat::backward::{direct_form, identity_deviation, pixel_stack, verify_gradient_identity, weighted_form};
use reactsplat::cli::random_stacks;
use reactsplat::scenesio::random::{random_scene, RandomSceneSpec};
use reactsplat::RenderOptions;

fn main() -> reactsplat::Result<()> {
    let stacks = random_stacks(11, 50);
    let worst = stacks.iter().map(|s| identity_deviation(s)).fold(0.0, f64::max);
    println!("50 random stacks (up to 10 primitives): max relative deviation {worst:.2e}");

    let s = &stacks[0];
    for i in 0..s.len().min(4) {
        println!("  stack 0, primitive {i}: chain form {:+.6e}, weight-factored {:+.6e}", direct_form(s, i), weighted_form(s, i));
    }

    let (cloud, cams) = random_scene(3, RandomSceneSpec { primitives: 120, width: 64, height: 64, cameras: 1 });
    let opts = RenderOptions::default();
    let pixel = Vector2::new(32.0, 32.0);
    let stack = pixel_stack(&cloud, &cams[0], pixel, &opts);
    println!("pixel (32, 32) has {} contributors", stack.len());
    if stack.len() >= 2 {
        let report = verify_gradient_identity(&cloud, &cams[0], pixel, &opts)?;
        println!("  max relative deviation over channels and axes: {:.2e}", report.max_rel_deviation);
    }
    Ok(())
}
