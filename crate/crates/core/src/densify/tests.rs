use nalgebra::{Matrix3, Vector2, Vector3, Vector4};
use rand::Rng;

use super::*;
use crate::cloud::{Gaussian, GaussianCloud};
use crate::gsmath::{build_covariance, logit};
use crate::rng;

fn one_view(norm: f64, abs: f64, pixels: u32, weight_sum: f64, dominant: u32) -> (ParamGradients, PerGaussianViewStats) {
    let mut g = ParamGradients::zeros(1);
    g.ndc_grad_signed[0] = Vector2::new(norm, 0.0);
    g.ndc_grad_abs[0] = Vector2::new(abs, 0.0);
    let s = PerGaussianViewStats { pixel_count: vec![pixels], weight_sum: vec![weight_sum], max_weight_pixels: vec![dominant] };
    (g, s)
}

fn scaled(s: [f64; 3]) -> Gaussian {
    Gaussian {
        position: Vector3::zeros(),
        raw_scale: Vector3::from(s).map(f64::ln),
        rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
        raw_opacity: 0.0,
        color: Vector3::repeat(0.5),
    }
}

#[test]
fn weighted_accumulation_example() {
    let mut acc = DensifyAccumulator::new(1);
    let (g, s) = one_view(4e-4, 4e-4, 10, 5.0, 0);
    acc.accumulate_view(&g, &s);
    assert!((acc.sum_weighted_norm[0] - 2e-4).abs() < 1e-18);
    assert_eq!(acc.sum_omega[0], 0.5);
    assert_eq!(acc.criterion(0, StrategyKind::React), 4e-4);
}

#[test]
fn invisible_view_leaves_accumulator_unchanged() {
    let mut acc = DensifyAccumulator::new(1);
    let (g, s) = one_view(1.0, 1.0, 0, 0.0, 0);
    acc.accumulate_view(&g, &s);
    assert_eq!(acc, DensifyAccumulator::new(1));
    for k in StrategyKind::ALL {
        assert_eq!(acc.criterion(0, k), 0.0);
    }
}

#[test]
fn react_reweights_toward_dominant_view() {
    let mut acc = DensifyAccumulator::new(1);
    for (w, n) in [(0.9, 10e-4), (0.1, 1e-4)] {
        let (g, s) = one_view(n, n, 1, w, 0);
        acc.accumulate_view(&g, &s);
    }
    assert!((acc.criterion(0, StrategyKind::Vanilla) - 5.5e-4).abs() < 1e-16);
    assert!((acc.criterion(0, StrategyKind::React) - 9.1e-4).abs() < 1e-16);
}

#[test]
fn pixel_factor_hook() {
    let mut acc = DensifyAccumulator::new(1);
    let (g, s) = one_view(2.0, 2.0, 4, 1.0, 0);
    acc.accumulate_view_with(&g, &s, |_| 0.5);
    assert_eq!(acc.sum_pixels[0], 2.0);
    assert_eq!(acc.criterion(0, StrategyKind::Pixelgs), 2.0);
}

#[test]
fn strategy_names_round_trip() {
    for k in StrategyKind::ALL {
        assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
    }
    assert!(matches!("bogus".parse::<StrategyKind>(), Err(Error::UnknownStrategy(_))));
    assert!(StrategyConfig { tau_ns: 0.3, ..StrategyConfig::default() }.validate().is_err());
    assert!(StrategyConfig { tau_pos: 0.0, ..StrategyConfig::default() }.validate().is_err());
    assert!(StrategyConfig { knn_k: 0, ..StrategyConfig::default() }.validate().is_err());
}

fn setup(crit: f64, scale: f64) -> (GaussianCloud, DensifyAccumulator) {
    let cloud: GaussianCloud = [scaled([scale; 3])].into_iter().collect();
    let mut acc = DensifyAccumulator::new(1);
    let (g, s) = one_view(crit, crit, 1, 1.0, 3);
    acc.accumulate_view(&g, &s);
    (cloud, acc)
}

#[test]
fn threshold_is_strict() {
    let cfg = StrategyConfig::preset(StrategyKind::Vanilla);
    let (cloud, acc) = setup(cfg.tau_pos, 1.0);
    let (out, rep) = select_and_densify(&cloud, &acc, &cfg, 1.0, (10, 10), &mut DensifyRngs::from_seed(0));
    assert_eq!(out, cloud);
    assert_eq!(rep.origins, vec![Origin::Kept(0)]);
}

#[test]
fn large_primitive_splits_small_one_clones() {
    let cfg = StrategyConfig::preset(StrategyKind::Vanilla);
    let (cloud, acc) = setup(1.0, 1.0);
    let (out, rep) = select_and_densify(&cloud, &acc, &cfg, 10.0, (10, 10), &mut DensifyRngs::from_seed(0));
    assert_eq!((rep.split, rep.clone, out.len()), (1, 0, 2));
    for i in 0..2 {
        assert!((out.raw_scales[i] - cloud.raw_scales[0].add_scalar(-1.6f64.ln())).norm() < 1e-15);
        assert_eq!(rep.origins[i], Origin::SplitChild(0));
    }
    let (small, acc) = setup(1.0, 0.01);
    let (out, rep) = select_and_densify(&small, &acc, &cfg, 10.0, (10, 10), &mut DensifyRngs::from_seed(0));
    assert_eq!((rep.split, rep.clone), (0, 1));
    assert_eq!(out.get(0), out.get(1));
    assert_eq!(rep.origins, vec![Origin::Kept(0), Origin::Cloned(0)]);
}

#[test]
fn blur_split_threshold_is_strict() {
    let mut cfg = StrategyConfig::preset(StrategyKind::Blursplit);
    cfg.tau_blur = Some(3);
    let (cloud, acc) = setup(0.0, 0.01);
    let (_, rep) = select_and_densify(&cloud, &acc, &cfg, 10.0, (10, 10), &mut DensifyRngs::from_seed(0));
    assert_eq!(rep.blur_split, 0);
    cfg.tau_blur = Some(2);
    let (out, rep) = select_and_densify(&cloud, &acc, &cfg, 10.0, (10, 10), &mut DensifyRngs::from_seed(0));
    assert_eq!((rep.blur_split, out.len()), (1, 2));
}

#[test]
fn split_children_follow_parent_density() {
    let mut g = scaled([0.5, 0.2, 0.1]);
    g.rotation = Vector4::new(0.8, 0.3, -0.4, 0.2);
    g.position = Vector3::new(1.0, -2.0, 3.0);
    let cov = build_covariance(&g.raw_scale, &g.rotation).unwrap();
    let mut r = rng::stream(4, rng::SPLIT);
    let n = 100_000 / SPLIT_CHILDREN;
    let mut samples = Vec::with_capacity(2 * n);
    for _ in 0..n {
        samples.extend(split_children(&g, &mut r).iter().map(|c| c.position));
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<Vector3<f64>>() / m;
    let mut emp = Matrix3::zeros();
    for s in &samples {
        let d = s - mean;
        emp += d * d.transpose();
    }
    emp /= m - 1.0;
    // χ²-style test on the mean: m·(x̄-μ)ᵀΣ⁻¹(x̄-μ) ~ χ²(3); 16.27 is the 0.999 quantile
    let dm = mean - g.position;
    let chi = m * (dm.transpose() * cov.try_inverse().unwrap() * dm)[0];
    assert!(chi < 16.27, "{chi}");
    assert!((emp - cov).abs().max() < 0.02 * cov.abs().max(), "{emp} vs {cov}");
}

#[test]
fn density_guided_clone_cases() {
    let g = scaled([0.1; 3]);
    let mut r = rng::stream(1, rng::DGC);
    assert_eq!(density_guided_clone(&g, 0.0, DgcStdMode::CovLiteral, &mut r), g);
    let c = density_guided_clone(&g, 4.0, DgcStdMode::CovLiteral, &mut r);
    assert_eq!((c.raw_scale, c.rotation, c.raw_opacity, c.color), (g.raw_scale, g.rotation, g.raw_opacity, g.color));
    let n = 20_000;
    let lin: Vec<Vector3<f64>> = (0..n).map(|_| density_guided_offset(0.5, DgcStdMode::StdLinear, &mut r)).collect();
    let var = lin.iter().map(|v| v.x * v.x).sum::<f64>() / n as f64;
    assert!((var.sqrt() - 0.5).abs() < 0.02);
}

#[test]
fn reactivated_clone_is_displaced() {
    let mut cfg = StrategyConfig::preset(StrategyKind::React);
    cfg.knn_k = 1;
    let mut cloud: GaussianCloud = [scaled([0.01; 3]), scaled([0.01; 3])].into_iter().collect();
    cloud.positions[1] = Vector3::new(4.0, 0.0, 0.0);
    let mut acc = DensifyAccumulator::new(2);
    let mut g = ParamGradients::zeros(2);
    g.ndc_grad_signed[0] = Vector2::new(1.0, 0.0);
    let s = PerGaussianViewStats { pixel_count: vec![1, 1], weight_sum: vec![1.0, 1.0], max_weight_pixels: vec![0, 0] };
    acc.accumulate_view(&g, &s);
    let (out, rep) = select_and_densify(&cloud, &acc, &cfg, 10.0, (10, 10), &mut DensifyRngs::from_seed(2));
    assert_eq!((rep.dgc_clone, rep.clone, out.len()), (1, 0, 3));
    assert_ne!(out.positions[2], cloud.positions[0]);
    assert_eq!(out.raw_scales[2], cloud.raw_scales[0]);
}

#[test]
fn knn_examples() {
    let pts = [0.0, 1.0, 2.0, 3.0, 10.0].map(|x| Vector3::new(x, 0.0, 0.0));
    assert_eq!(knn_mean_distance_exhaustive(&pts, 0, 3).mean, 2.0);
    let same = vec![Vector3::repeat(1.5); 80];
    assert_eq!(KnnIndex::new(&same).mean_distance(3, 3).mean, 0.0);
    let short = knn_mean_distance_exhaustive(&pts[..2], 0, 3);
    assert_eq!((short.neighbors, short.shortfall(3), short.mean), (1, 2, 1.0));
}

#[test]
fn knn_grid_is_exact() {
    let mut r = rng::stream(9, "knn");
    for trial in 0..6 {
        let n = 100 + 300 * trial;
        let mut pts: Vec<Vector3<f64>> =
            (0..n).map(|_| Vector3::from_fn(|_, _| r.random_range(-2.0..2.0))).collect();
        // integer lattice points produce many exact ties
        for p in pts.iter_mut().take(n / 3) {
            *p = p.map(|v| v.round());
        }
        let index = KnnIndex::new(&pts);
        for i in 0..n {
            assert_eq!(index.mean_distance(i, 3), knn_mean_distance_exhaustive(&pts, i, 3));
        }
    }
}

#[test]
fn needle_examples() {
    let cloud: GaussianCloud = [scaled([10.0, 1.0, 1.0]), scaled([1.0; 3]), scaled([4.0, 0.5, 0.5])].into_iter().collect();
    assert_eq!(detect_needles(&cloud, 0.8), vec![0]);
    let mut c = cloud.clone();
    assert_eq!(perturb_needles(&mut c, &[0]), 1);
    assert!((c.scale(0) - Vector3::new(10.0, 5.0, 5.0)).norm() < 1e-12);
    assert_eq!(c.positions[0], cloud.positions[0]);
    assert!(detect_needles(&c, 0.8).is_empty());
}

#[test]
fn needle_perturbation_bound() {
    let mut r = rng::stream(3, "needles");
    let mut cloud = GaussianCloud::new();
    for _ in 0..10_000 {
        cloud.push(scaled([0, 1, 2].map(|_| r.random_range(-6.0f64..2.0).exp())));
    }
    let flagged = detect_needles(&cloud, 0.8);
    assert!(!flagged.is_empty());
    for &i in &flagged {
        let s = cloud.scale(i);
        let mut v = [s.x, s.y, s.z];
        v.sort_by(f64::total_cmp);
        assert!(v[2] / v[1] > 4.0);
    }
    perturb_needles(&mut cloud, &flagged);
    for &i in &flagged {
        let s = cloud.scale(i);
        assert!(s.max() / s.sum() <= NEEDLE_RATIO_BOUND + 1e-12);
    }
    assert!(detect_needles(&cloud, 0.8).is_empty());
}

#[test]
fn prune_and_reset() {
    let mut cloud: GaussianCloud = [scaled([0.1; 3]), scaled([0.1; 3])].into_iter().collect();
    let (same, kept) = prune(&cloud, 0.005, None, &[]);
    assert_eq!((same, kept.clone()), (cloud.clone(), vec![0, 1]));
    cloud.raw_opacities[1] = logit(0.001);
    let (out, kept) = prune(&cloud, 0.005, None, &[]);
    assert_eq!((out.len(), kept), (1, vec![0]));

    let cam = crate::gsmath::Camera::look_at(
        Vector3::new(0.0, 0.0, -4.0), Vector3::zeros(), Vector3::y(), 32.0, 32, 32,
    )
    .unwrap();
    let mut wide = cloud.clone();
    wide.raw_scales[0] = Vector3::repeat(2.0f64.ln());
    wide.raw_opacities[1] = 0.0;
    let (_, kept) = prune(&wide, 0.005, Some(0.5), &[cam]);
    assert_eq!(kept, vec![1]);

    let mut c: GaussianCloud = [scaled([0.1; 3]), scaled([0.1; 3])].into_iter().collect();
    c.raw_opacities[1] = logit(0.005);
    assert_eq!(opacity_reset(&mut c, 0.01), 1);
    assert!((c.opacity(0) - 0.01).abs() < 1e-15);
    assert_eq!(c.raw_opacities[1], logit(0.005));
    let snapshot = c.clone();
    assert_eq!(opacity_reset(&mut c, 0.01), 0);
    assert_eq!(c, snapshot);
}

#[test]
fn report_composes_with_prune() {
    let mut rep = DensifyReport::identity(3);
    rep.origins.push(Origin::Cloned(1));
    rep.then_keep(&[0, 2, 3]);
    assert_eq!(rep.origins, vec![Origin::Kept(0), Origin::Kept(2), Origin::Cloned(1)]);
    assert_eq!((rep.pruned, rep.total), (1, 3));
    assert_eq!(rep.origins[2].surviving(), None);
    assert_eq!(rep.origins[2].parent(), 1);
}
