use rayon::prelude::*;

use super::{composite_pixel, prepare, FixedSum, PerGaussianViewStats, RenderOptions, RenderOutput};
use crate::cloud::GaussianCloud;
use crate::gsmath::Camera;
use crate::image::Image;

/// Reference renderer: every pixel visits every valid primitive in global
/// depth order, with no tiling or culling.
pub fn oracle_render(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> RenderOutput {
    let prep = prepare(cloud, cam, opts);
    let w = cam.width;
    let ordered = prep.gather(&prep.order);
    let rows: Vec<_> = (0..cam.height)
        .into_par_iter()
        .map(|py| {
            let mut pixels = Vec::with_capacity(w as usize);
            let mut hits: Vec<(u32, f64, bool)> = Vec::new();
            for px in 0..w {
                let start = hits.len();
                let (res, best) = composite_pixel(
                    &ordered,
                    f64::from(px),
                    f64::from(py),
                    &opts.background,
                    |slot, wgt| hits.push((prep.order[slot], wgt, false)),
                );
                if let Some(slot) = best {
                    let id = prep.order[slot];
                    if let Some(h) = hits[start..].iter_mut().find(|h| h.0 == id) {
                        h.2 = true;
                    }
                }
                pixels.push(res);
            }
            (pixels, hits)
        })
        .collect();

    let n = cloud.len();
    let mut stats = PerGaussianViewStats::zeros(n);
    let mut sums = vec![FixedSum::ZERO; n];
    let mut color = Image::new(cam.width, cam.height);
    let n_pix = cam.pixel_count();
    let mut depth = Vec::with_capacity(n_pix);
    let mut final_transmittance = Vec::with_capacity(n_pix);
    let mut weight_total = Vec::with_capacity(n_pix);
    for (py, (pixels, hits)) in rows.into_iter().enumerate() {
        for (px, r) in pixels.iter().enumerate() {
            let p = py * w as usize + px;
            color.data[3 * p..3 * p + 3].copy_from_slice(&r.color);
            depth.push(r.depth);
            final_transmittance.push(r.transmittance);
            weight_total.push(r.weight_total);
        }
        for (id, wgt, is_max) in hits {
            let i = id as usize;
            stats.pixel_count[i] += 1;
            sums[i].add(wgt);
            stats.max_weight_pixels[i] += u32::from(is_max);
        }
    }
    stats.weight_sum = sums.into_iter().map(FixedSum::value).collect();
    RenderOutput { color, depth, final_transmittance, weight_total, stats }
}
