//! Time the stages of one training iteration: forward render, loss, backward.
//!
//! cargo run --release --example stage_timing -- [primitives|preset] [size]
//!
//! A number renders a random scene of that many primitives; a preset name
//! (e.g. `high-frequency-plane`) renders its dense reference cloud.

use std::time::Instant;

use reactsplat::backward::render_backward;
use reactsplat::lossmetrics::{photometric_loss, LossConfig};
use reactsplat::render::{render_forward, RenderOptions};
use reactsplat::scenesio::random::{random_scene, RandomSceneSpec};
use reactsplat::scenesio::{preset_cameras, reference_cloud, SyntheticPreset};
use reactsplat::Image;

fn main() -> reactsplat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let what = args.first().map_or("10000", String::as_str);
    let size = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(128u32);
    let (cloud, cams) = match what.parse::<usize>() {
        Ok(n) => random_scene(1, RandomSceneSpec { primitives: n, width: size, height: size, cameras: 1 }),
        Err(_) => {
            let preset: SyntheticPreset = what.parse()?;
            (reference_cloud(preset, 0), preset_cameras(preset)?)
        }
    };
    let cam = &cams[0];
    let opts = RenderOptions::default();
    let target = Image::filled(cam.width, cam.height, [0.4, 0.5, 0.6]);
    let reps: u32 = std::env::var("REPS").ok().and_then(|s| s.parse().ok()).unwrap_or(10);
    let (mut tf, mut tl, mut tb) = (0.0, 0.0, 0.0);
    for _ in 0..reps {
        let t = Instant::now();
        let fwd = render_forward(&cloud, cam, &opts);
        tf += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let (_, dl) = photometric_loss(&fwd.color, &target, &LossConfig::default())?;
        tl += t.elapsed().as_secs_f64();
        let t = Instant::now();
        let g = render_backward(&cloud, cam, &fwd, &dl, &opts)?;
        tb += t.elapsed().as_secs_f64();
        assert!(g.all_finite());
    }
    let ms = |s: f64| 1e3 * s / f64::from(reps);
    println!(
        "{} primitives at {}x{}: forward {:.2} ms, loss {:.2} ms, backward {:.2} ms",
        cloud.len(),
        cam.width,
        cam.height,
        ms(tf),
        ms(tl),
        ms(tb)
    );
    Ok(())
}
