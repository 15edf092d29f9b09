//! Detect needle-shaped primitives and widen their short axes so they can
//! receive useful gradients again.
//!
//! cargo run --release --example needle_perturbation

use nalgebra::Vector3;
use reactsplat::densify::{detect_needles, perturb_needles, NEEDLE_RATIO_BOUND};
use reactsplat::{Gaussian, GaussianCloud};

fn main() {
    let shapes = [[10.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.2, 6.0, 0.5], [3.0, 2.0, 1.0], [0.01, 0.01, 0.5]];
    let mut cloud: GaussianCloud = shapes
        .iter()
        .map(|s| Gaussian { raw_scale: Vector3::from(*s).map(f64::ln), ..Gaussian::isotropic(Vector3::zeros(), 1.0, 0.5, Vector3::zeros()) })
        .collect();

    let tau = 0.8;
    let flagged = detect_needles(&cloud, tau);
    println!("flagged as needles (max/sum > {tau}): {flagged:?}");
    let before: Vec<Vector3<f64>> = (0..cloud.len()).map(|i| cloud.scale(i)).collect();
    perturb_needles(&mut cloud, &flagged);
    for (i, b) in before.iter().enumerate() {
        let a = cloud.scale(i);
        println!(
            "  {i}: ({:.3}, {:.3}, {:.3}) -> ({:.3}, {:.3}, {:.3})  max/sum {:.3}",
            b.x,
            b.y,
            b.z,
            a.x,
            a.y,
            a.z,
            a.max() / a.sum()
        );
    }
    println!("after perturbation every ratio is ≤ {NEEDLE_RATIO_BOUND:.3}; detected again: {:?}", detect_needles(&cloud, tau));
}
