use nalgebra::{Matrix3, Vector2, Vector3, Vector4};

use super::*;
use crate::cloud::Gaussian;
use crate::gsmath::logit;
use crate::render::render_forward;
use crate::rng;
use crate::scenesio::random::{random_scene, random_weights, RandomSceneSpec};

fn axis_camera(w: u32, h: u32) -> Camera {
    Camera::new(40.0, 40.0, f64::from(w) / 2.0, f64::from(h) / 2.0, w, h, Matrix3::identity(), Vector3::zeros(), 0.1).unwrap()
}

fn centered(depth: f64, opacity: f64, color: [f64; 3]) -> Gaussian {
    Gaussian {
        position: Vector3::new(0.0, 0.0, depth),
        raw_scale: Vector3::repeat(-2.0),
        rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
        raw_opacity: logit(opacity),
        color: Vector3::from(color),
    }
}

#[test]
fn color_gradient_is_blend_weight() {
    let cam = axis_camera(32, 32);
    let cloud: GaussianCloud = [centered(4.0, 0.7, [0.3, 0.5, 0.2])].into_iter().collect();
    let opts = RenderOptions::default();
    let fwd = render_forward(&cloud, &cam, &opts);
    let mut dl = Image::new(32, 32);
    let p = 16 * 32 + 16;
    dl.data[3 * p] = 1.0;
    let g = render_backward(&cloud, &cam, &fwd, &dl, &opts).unwrap();
    assert!((g.d_color[0].x - 0.7).abs() < 1e-15);
    assert_eq!(g.d_color[0].y, 0.0);
    assert_eq!(g.d_color[0].z, 0.0);
}

#[test]
fn mismatched_gradient_image_is_rejected() {
    let cam = axis_camera(16, 16);
    let cloud: GaussianCloud = [centered(4.0, 0.7, [0.3, 0.5, 0.2])].into_iter().collect();
    let fwd = render_forward(&cloud, &cam, &RenderOptions::default());
    assert!(matches!(
        render_backward(&cloud, &cam, &fwd, &Image::new(8, 16), &RenderOptions::default()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn backward_is_linear_and_abs_dominates_signed() {
    let (cloud, cams) = random_scene(5, RandomSceneSpec { primitives: 60, width: 40, height: 40, cameras: 2 });
    let opts = RenderOptions::default();
    let mut r = rng::stream(1, "w");
    for cam in &cams {
        let fwd = render_forward(&cloud, cam, &opts);
        let w = random_weights(&mut r, 40, 40);
        let mut w2 = w.clone();
        w2.data.iter_mut().for_each(|v| *v *= 2.0);
        let g1 = render_backward(&cloud, cam, &fwd, &w, &opts).unwrap();
        let g2 = render_backward(&cloud, cam, &fwd, &w2, &opts).unwrap();
        assert!(g1.all_finite());
        for i in 0..cloud.len() {
            assert_eq!(g2.d_position[i], g1.d_position[i] * 2.0);
            assert_eq!(g2.d_rotation[i], g1.d_rotation[i] * 2.0);
            assert_eq!(g2.d_raw_opacity[i], g1.d_raw_opacity[i] * 2.0);
            for k in 0..2 {
                assert!(g1.ndc_grad_abs[i][k] >= g1.ndc_grad_signed[i][k].abs());
            }
            if fwd.stats.pixel_count[i] == 0 {
                assert_eq!(g1.d_position[i], Vector3::zeros());
                assert_eq!(g1.d_color[i], Vector3::zeros());
                assert_eq!(g1.ndc_grad_abs[i], Vector2::zeros());
            }
        }
    }
}

#[test]
fn fully_occluded_primitive_has_zero_gradient() {
    let cam = axis_camera(32, 32);
    // saturated front layers drive transmittance to the cutoff before the last
    let mut cloud: GaussianCloud =
        [centered(2.0, 0.999, [1.0, 0.0, 0.0]), centered(2.5, 0.999, [0.0, 1.0, 0.0]), centered(3.0, 0.999, [0.0, 1.0, 0.0])]
            .into_iter()
            .collect();
    let mut hidden = centered(6.0, 0.9, [0.0, 0.0, 1.0]);
    hidden.raw_scale = Vector3::repeat(-3.0);
    cloud.push(hidden);
    for i in 0..3 {
        cloud.raw_scales[i] = Vector3::repeat(-1.0);
    }
    let opts = RenderOptions::default();
    let fwd = render_forward(&cloud, &cam, &opts);
    assert_eq!(fwd.stats.pixel_count[3], 0);
    let mut r = rng::stream(3, "w");
    let w = random_weights(&mut r, 32, 32);
    let g = render_backward(&cloud, &cam, &fwd, &w, &opts).unwrap();
    assert_eq!(g.d_position[3], Vector3::zeros());
    assert_eq!(g.d_raw_scale[3], Vector3::zeros());
    assert_eq!(g.d_raw_opacity[3], 0.0);
}

#[test]
fn extended_loss_agrees_with_renderer() {
    let (cloud, cams) = random_scene(8, RandomSceneSpec { primitives: 40, width: 24, height: 24, cameras: 1 });
    let opts = RenderOptions::with_background([0.2, 0.4, 0.6]);
    let mut r = rng::stream(2, "w");
    let w = random_weights(&mut r, 24, 24);
    let fwd = render_forward(&cloud, &cams[0], &opts);
    let direct: f64 = fwd.color.data.iter().zip(&w.data).map(|(a, b)| a * b).sum();
    let (f, _) = linear_loss_extended::<f64>(&cloud, &cams[0], &w, &opts, None, (0, 24, 0, 24));
    let (dd, _) = linear_loss_extended::<DoubleDouble>(&cloud, &cams[0], &w, &opts, None, (0, 24, 0, 24));
    assert!((f - direct).abs() < 1e-10);
    assert!((dd.to_f64() - direct).abs() < 1e-10);
}

#[test]
fn gradients_match_extended_finite_differences() {
    let opts = RenderOptions::with_background([0.1, 0.2, 0.3]);
    for seed in 0..3 {
        let (cloud, cams) = random_scene(seed, RandomSceneSpec { primitives: 20, width: 24, height: 24, cameras: 1 });
        let mut r = rng::stream(seed, "w");
        let w = random_weights(&mut r, 24, 24);
        let rep = gradcheck_linear_loss(&cloud, &cams[0], &w, &opts, &ParamSelector::all(), 1e-6).unwrap();
        assert!(rep.max_rel_err <= 1e-4, "seed {seed}: {rep:?}");
        assert!(rep.checked > 0);
    }
}

#[test]
fn finite_diff_check_contracts() {
    let cam = axis_camera(16, 16);
    let mut cloud: GaussianCloud = [centered(4.0, 0.6, [0.3, 0.5, 0.2])].into_iter().collect();
    let mut zero = centered(5.0, 0.5, [0.9, 0.9, 0.9]);
    zero.raw_opacity = -80.0;
    cloud.push(zero);
    let opts = RenderOptions::default();
    let target = Image::filled(16, 16, [0.5, 0.5, 0.5]);
    let quad = |img: &Image| {
        let mut g = img.clone();
        let mut l = 0.0;
        for (gv, t) in g.data.iter_mut().zip(&target.data) {
            l += 0.5 * (*gv - t).powi(2);
            *gv -= t;
        }
        (l, g)
    };
    assert!(matches!(
        finite_diff_check(&cloud, &cam, &opts, quad, &ParamSelector::all(), 0.0),
        Err(Error::Contract(_))
    ));
    // quadratic loss is quadratic in color: central differences are exact
    let rep = finite_diff_check(&cloud, &cam, &opts, quad, &ParamSelector::only(ParamKind::Color), 1e-4).unwrap();
    assert!(rep.max_rel_err < 1e-9, "{rep:?}");
    let fwd = render_forward(&cloud, &cam, &opts);
    let (_, dl) = quad(&fwd.color);
    let g = render_backward(&cloud, &cam, &fwd, &dl, &opts).unwrap();
    assert!(g.d_color[1].norm() < 1e-12 && g.d_position[1].norm() < 1e-12);
}

#[test]
fn identity_small_stacks() {
    let two = [
        StackEntry { opacity: 0.5, gauss: 1.0, color: 0.8, g_prime: 0.3 },
        StackEntry { opacity: 0.5, gauss: 1.0, color: 0.4, g_prime: -0.2 },
    ];
    let expect = 0.5 * (0.8 - 0.5 * 0.4) * 0.3;
    assert!((identity::weighted_form(&two, 0) - expect).abs() < 1e-15);
    assert!((identity::direct_form(&two, 0) - expect).abs() < 1e-15);
    let one = [StackEntry { opacity: 0.7, gauss: 0.6, color: 0.9, g_prime: 1.5 }];
    let omega = 0.7 * 0.6;
    assert!((identity::direct_form(&one, 0) - omega * 0.9 * 1.5).abs() < 1e-15);
    assert!(identity_deviation(&one) <= 1e-15);
}

#[test]
fn identity_on_rendered_pixel() {
    let cam = axis_camera(32, 32);
    let cloud: GaussianCloud =
        [centered(4.0, 0.4, [0.3, 0.5, 0.2]), centered(6.0, 0.6, [0.9, 0.1, 0.4]), centered(3.0, 0.3, [0.2, 0.2, 0.8])]
            .into_iter()
            .collect();
    let rep = verify_gradient_identity(&cloud, &cam, Vector2::new(17.0, 15.0), &RenderOptions::default()).unwrap();
    assert_eq!(rep.contributors, 3);
    assert!(rep.max_rel_deviation <= 1e-10);
    let single: GaussianCloud = [centered(4.0, 0.4, [0.3, 0.5, 0.2])].into_iter().collect();
    assert!(verify_gradient_identity(&single, &cam, Vector2::new(16.0, 16.0), &RenderOptions::default()).is_err());
}
