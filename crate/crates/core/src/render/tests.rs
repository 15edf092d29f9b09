use nalgebra::{Matrix3, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cloud::Gaussian;
use crate::gsmath::logit;

fn axis_camera(w: u32, h: u32) -> Camera {
    Camera::new(40.0, 40.0, f64::from(w) / 2.0, f64::from(h) / 2.0, w, h, Matrix3::identity(), Vector3::zeros(), 0.1).unwrap()
}

fn random_cloud(seed: u64, n: usize) -> GaussianCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Gaussian {
            position: Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..6.0)),
            raw_scale: Vector3::from_fn(|_, _| rng.random_range(-3.5..-1.5)),
            rotation: Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            raw_opacity: rng.random_range(-2.0..3.0),
            color: Vector3::from_fn(|_, _| rng.random_range(0.0..1.0)),
        })
        .collect()
}

fn centered(depth: f64, opacity_raw: f64, color: [f64; 3]) -> Gaussian {
    Gaussian {
        position: Vector3::new(0.0, 0.0, depth),
        raw_scale: Vector3::repeat(-2.0),
        rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
        raw_opacity: opacity_raw,
        color: Vector3::from(color),
    }
}

#[test]
fn single_saturated_primitive() {
    let cam = axis_camera(32, 32);
    let cloud: GaussianCloud = [centered(4.0, 40.0, [0.2, 0.6, 1.0])].into_iter().collect();
    let out = render_forward(&cloud, &cam, &RenderOptions::default());
    let p = 16 * 32 + 16;
    assert!((out.color.data[3 * p] - 0.99 * 0.2).abs() < 1e-15);
    assert!((out.color.data[3 * p + 2] - 0.99).abs() < 1e-15);
    assert!((out.final_transmittance[p] - 0.01).abs() < 1e-15);
    assert!((out.depth[p] - 4.0 * 0.99).abs() < 1e-12);
}

#[test]
fn two_half_alpha_layers() {
    let cam = axis_camera(32, 32);
    let half = logit(0.5);
    let cloud: GaussianCloud = [centered(10.0, half, [0.0, 1.0, 0.0]), centered(2.0, half, [1.0, 0.0, 0.0])]
        .into_iter()
        .collect();
    let out = render_forward(&cloud, &cam, &RenderOptions::default());
    let p = 16 * 32 + 16;
    assert!((out.color.data[3 * p] - 0.5).abs() < 1e-12);
    assert!((out.color.data[3 * p + 1] - 0.25).abs() < 1e-12);
    assert!((out.depth[p] - 3.5).abs() < 1e-12);
    assert!((out.final_transmittance[p] - 0.25).abs() < 1e-12);
}

#[test]
fn empty_cloud_is_background() {
    let cam = axis_camera(8, 8);
    let opts = RenderOptions::with_background([1.0, 1.0, 1.0]);
    for out in [render_forward(&GaussianCloud::new(), &cam, &opts), oracle_render(&GaussianCloud::new(), &cam, &opts)] {
        assert!(out.color.data.iter().all(|&v| v == 1.0));
        assert!(out.final_transmittance.iter().all(|&t| t == 1.0));
        assert!(out.depth.iter().all(|&d| d == 0.0));
    }
}

#[test]
fn tiny_primitive_touches_one_pixel() {
    let cam = axis_camera(16, 16);
    let mut g = centered(4.0, 40.0, [1.0, 1.0, 1.0]);
    g.raw_scale = Vector3::repeat(-9.0);
    let cloud: GaussianCloud = [g].into_iter().collect();
    // the default 0.3 px² floor alone spans a 3x3 footprint; tighten it
    let opts = RenderOptions { low_pass: 0.01, ..RenderOptions::default() };
    let out = oracle_render(&cloud, &cam, &opts);
    assert_eq!(out, render_forward(&cloud, &cam, &opts));
    let lit: Vec<usize> = (0..256).filter(|&p| out.color.data[3 * p] != 0.0).collect();
    assert_eq!(lit, vec![8 * 16 + 8]);
    assert_eq!(out.stats.pixel_count[0], 1);
}

#[test]
fn tiled_matches_oracle() {
    for seed in 0..5 {
        let cloud = random_cloud(seed, 120);
        let cam = axis_camera(48, 40);
        let opts = RenderOptions::with_background([0.3, 0.1, 0.9]);
        let a = render_forward(&cloud, &cam, &opts);
        let b = oracle_render(&cloud, &cam, &opts);
        assert_eq!(a, b);
    }
}

#[test]
fn storage_order_and_tile_size_do_not_matter() {
    let cloud = random_cloud(11, 150);
    let cam = axis_camera(40, 36);
    let base = render_forward(&cloud, &cam, &RenderOptions::default());
    let perm: Vec<usize> = (0..cloud.len()).rev().collect();
    let shuffled = cloud.gather(&perm);
    let out = render_forward(&shuffled, &cam, &RenderOptions::default());
    assert_eq!(out.color, base.color);
    assert_eq!(out.depth, base.depth);
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(out.stats.pixel_count[k], base.stats.pixel_count[i]);
        assert_eq!(out.stats.weight_sum[k], base.stats.weight_sum[i]);
    }
    for ts in [1, 7, 16, 64] {
        let o = render_forward(&cloud, &cam, &RenderOptions { tile_size: ts, ..RenderOptions::default() });
        assert_eq!(o, base, "tile size {ts}");
    }
}

#[test]
fn stats_and_conservation_invariants() {
    let cloud = random_cloud(3, 200);
    let cam = axis_camera(48, 48);
    let out = render_forward(&cloud, &cam, &RenderOptions::default());
    for p in 0..cam.pixel_count() {
        assert!((out.weight_total[p] + out.final_transmittance[p] - 1.0).abs() < 1e-12);
        for c in 0..3 {
            assert!(out.color.data[3 * p + c] <= 1.0 + 1e-6);
        }
    }
    let s = &out.stats;
    let total_max: u32 = s.max_weight_pixels.iter().sum();
    assert!(total_max as usize <= cam.pixel_count());
    for i in 0..cloud.len() {
        assert!(s.weight_sum[i] >= 0.0 && s.weight_sum[i] <= f64::from(s.pixel_count[i]));
        assert!(s.max_weight_pixels[i] <= s.pixel_count[i]);
    }
}
