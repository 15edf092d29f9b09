//! PSNR, SSIM and the training loss on a rendered image and noisy copies.
//!
//! cargo run --release --example image_metrics

use rand_distr::{Distribution, Normal};
use reactsplat::lossmetrics::{photometric_loss, psnr, ssim, LossConfig};
use reactsplat::rng;
use reactsplat::scenesio::random::{random_scene, RandomSceneSpec};
use reactsplat::{render_forward, Image, RenderOptions};

fn main() -> reactsplat::Result<()> {
    let (cloud, cams) = random_scene(4, RandomSceneSpec { primitives: 150, width: 64, height: 64, cameras: 1 });
    let clean = render_forward(&cloud, &cams[0], &RenderOptions::default()).color;
    let cfg = LossConfig::default();
    let mut r = rng::stream(4, "noise");
    println!("{:>8} {:>8} {:>8} {:>8}", "noise σ", "PSNR", "SSIM", "loss");
    for sigma in [0.0, 0.01, 0.05, 0.1, 0.2] {
        let noisy = if sigma > 0.0 {
            let n = Normal::new(0.0, sigma).expect("positive σ");
            Image { data: clean.data.iter().map(|v| (v + n.sample(&mut r)).clamp(0.0, 1.0)).collect(), ..clean.clone() }
        } else {
            clean.clone()
        };
        let (loss, _) = photometric_loss(&noisy, &clean, &cfg)?;
        println!("{sigma:>8.2} {:>8.2} {:>8.4} {:>8.4}", psnr(&noisy, &clean)?, ssim(&noisy, &clean, &cfg)?, loss);
    }
    Ok(())
}
