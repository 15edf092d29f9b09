//! Render a random scene with the tiled rasterizer and the brute-force
//! oracle, compare them, and write color and depth PNGs.
//!
//! cargo run --release --example render_scene -- [out-dir]

use std::path::PathBuf;

use reactsplat::image::save_depth_png;
use reactsplat::scenesio::random::{random_scene, RandomSceneSpec};
use reactsplat::{oracle_render, render_forward, RenderOptions};

fn main() -> reactsplat::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("reactsplat-render"), PathBuf::from);
    std::fs::create_dir_all(&out)?;

    let (cloud, cams) = random_scene(7, RandomSceneSpec { primitives: 150, width: 96, height: 64, cameras: 3 });
    let opts = RenderOptions::with_background([0.05, 0.05, 0.08]);
    for (k, cam) in cams.iter().enumerate() {
        let tiled = render_forward(&cloud, cam, &opts);
        let oracle = oracle_render(&cloud, cam, &opts);
        let max_diff = tiled.color.data.iter().zip(&oracle.color.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let conservation = tiled
            .weight_total
            .iter()
            .zip(&tiled.final_transmittance)
            .map(|(w, t)| (w + t - 1.0).abs())
            .fold(0.0, f64::max);
        let visible = tiled.stats.pixel_count.iter().filter(|&&m| m > 0).count();

        tiled.color.save_png(&out.join(format!("view_{k}.png")))?;
        let range = save_depth_png(&tiled.depth, cam.width, cam.height, &out.join(format!("depth_{k}.png")))?;
        println!(
            "view {k}: {visible}/{} primitives visible, |tiled - oracle| ≤ {max_diff:.1e}, stats equal: {}, \
             max |Σω + T - 1| = {conservation:.1e}, depth range {range:?}",
            cloud.len(),
            tiled.stats == oracle.stats,
        );
    }
    println!("images written to {}", out.display());
    Ok(())
}
