//! Density-guided cloning: the clone of a primitive is displaced by a
//! Gaussian offset whose spread follows the mean distance to its K nearest
//! neighbours, so sparse regions spread clones further.
//!
//! cargo run --release --example density_guided_clone

use nalgebra::Vector3;
use reactsplat::densify::{density_guided_offset, knn_mean_distance_exhaustive, DgcStdMode, KnnIndex};
use reactsplat::rng;
use rand::Rng;

fn main() {
    let mut r = rng::stream(1, "example");
    // a dense cluster around the origin and a sparse halo
    let mut points: Vec<Vector3<f64>> =
        (0..400).map(|_| Vector3::from_fn(|_, _| r.random_range(-0.1..0.1))).collect();
    points.extend((0..40).map(|_| Vector3::from_fn(|_, _| r.random_range(-2.0..2.0))));

    let index = KnnIndex::new(&points);
    for &i in &[0usize, 420] {
        let d = index.mean_distance(i, 3);
        assert_eq!(d, knn_mean_distance_exhaustive(&points, i, 3));
        println!("point {i}: mean distance to 3 nearest neighbours {:.4}", d.mean);
    }

    for mode in [DgcStdMode::CovLiteral, DgcStdMode::StdLinear] {
        let n = 100_000;
        let samples: Vec<Vector3<f64>> = (0..n).map(|_| density_guided_offset(4.0, mode, &mut r)).collect();
        let mean = samples.iter().sum::<Vector3<f64>>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).component_mul(&(s - mean))).sum::<Vector3<f64>>() / n as f64;
        let std = var.map(f64::sqrt);
        println!("d = 4, {mode:?}: offset mean ({:+.3}, {:+.3}, {:+.3}), std ({:.3}, {:.3}, {:.3})", mean.x, mean.y, mean.z, std.x, std.y, std.z);
    }
    println!("d = 0 offset: {:?}", density_guided_offset(0.0, DgcStdMode::CovLiteral, &mut r));
}
