use rayon::prelude::*;

use super::{
    composite_pixel, prepare, FixedSum, PerGaussianViewStats, PixelResult, Prepared, RenderOptions, RenderOutput, Splat,
};
use crate::cloud::GaussianCloud;
use crate::gsmath::{Camera, Projected2D};
use crate::image::Image;

/// Depth-ordered primitive lists per screen tile.
pub(crate) struct TileBins {
    pub tile_size: u32,
    pub tiles_x: u32,
    pub width: u32,
    pub height: u32,
    pub lists: Vec<Vec<u32>>,
}

/// Side of the pixel blocks a tile is split into for finer culling.
const BLOCK: u32 = 4;

/// A block of pixels `[x0, x1) × [y0, y1)` inside a tile, with the tile-list
/// slots (in depth order) whose support box reaches it.
pub(crate) struct Block {
    pub x0: u32,
    pub x1: u32,
    pub y0: u32,
    pub y1: u32,
    pub slots: Vec<u32>,
    pub splats: Vec<Splat>,
}

/// Inclusive pixel box around the 3σ ellipse, one pixel of slack on each side.
fn pixel_box(p: &Projected2D) -> [f64; 4] {
    let half = p.support_half_extent();
    [
        (p.mean.x - half.x).floor() - 1.0,
        (p.mean.x + half.x).ceil() + 1.0,
        (p.mean.y - half.y).floor() - 1.0,
        (p.mean.y + half.y).ceil() + 1.0,
    ]
}

impl TileBins {
    pub fn build(prep: &Prepared, width: u32, height: u32, tile_size: u32) -> Self {
        assert!(tile_size > 0, "tile size must be positive");
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let mut lists = vec![Vec::new(); (tiles_x * tiles_y) as usize];
        for &id in &prep.order {
            // the slack around the exact 3σ box absorbs rounding
            let [x0, x1, y0, y1] = pixel_box(&prep.projected[id as usize]);
            if !(x1 >= 0.0 && y1 >= 0.0 && x0 < f64::from(width) && y0 < f64::from(height)) {
                continue;
            }
            let px0 = x0.max(0.0) as u32;
            let py0 = y0.max(0.0) as u32;
            let px1 = x1.min(f64::from(width - 1)) as u32;
            let py1 = y1.min(f64::from(height - 1)) as u32;
            for ty in py0 / tile_size..=py1 / tile_size {
                for tx in px0 / tile_size..=px1 / tile_size {
                    lists[(ty * tiles_x + tx) as usize].push(id);
                }
            }
        }
        Self { tile_size, tiles_x, width, height, lists }
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` of tile `t`.
    pub fn bounds(&self, t: usize) -> (u32, u32, u32, u32) {
        let tx = t as u32 % self.tiles_x;
        let ty = t as u32 / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(self.width), y0, (y0 + self.tile_size).min(self.height))
    }

    /// Splits tile `t` into pixel blocks, each carrying only the candidates
    /// whose support box overlaps it. Candidates left out cannot touch any
    /// pixel of the block, so compositing a block's list gives the same
    /// result as compositing the whole tile list.
    pub fn blocks(&self, prep: &Prepared, t: usize) -> Vec<Block> {
        let (tx0, tx1, ty0, ty1) = self.bounds(t);
        let bx_count = (tx1 - tx0).div_ceil(BLOCK);
        let by_count = (ty1 - ty0).div_ceil(BLOCK);
        let mut out: Vec<Block> = (0..by_count)
            .flat_map(|by| (0..bx_count).map(move |bx| (bx, by)))
            .map(|(bx, by)| {
                let x0 = tx0 + bx * BLOCK;
                let y0 = ty0 + by * BLOCK;
                Block {
                    x0,
                    x1: (x0 + BLOCK).min(tx1),
                    y0,
                    y1: (y0 + BLOCK).min(ty1),
                    slots: Vec::new(),
                    splats: Vec::new(),
                }
            })
            .collect();
        // block index range covered by the inclusive pixel span [lo, hi]
        let span = |lo: f64, hi: f64, start: u32, end: u32| -> Option<(u32, u32)> {
            if hi < f64::from(start) || lo > f64::from(end - 1) {
                return None;
            }
            let a = lo.max(f64::from(start)) as u32 - start;
            let b = hi.min(f64::from(end - 1)) as u32 - start;
            Some((a / BLOCK, b / BLOCK))
        };
        for (slot, &id) in self.lists[t].iter().enumerate() {
            let [x0, x1, y0, y1] = pixel_box(&prep.projected[id as usize]);
            let (Some((bxa, bxb)), Some((bya, byb))) = (span(x0, x1, tx0, tx1), span(y0, y1, ty0, ty1)) else {
                continue;
            };
            for by in bya..=byb {
                for bx in bxa..=bxb {
                    let block = &mut out[(by * bx_count + bx) as usize];
                    block.slots.push(slot as u32);
                    block.splats.push(prep.splats[id as usize]);
                }
            }
        }
        out
    }
}

struct TileOutput {
    pixels: Vec<PixelResult>,
    count: Vec<u32>,
    weight: Vec<FixedSum>,
    max_count: Vec<u32>,
}

fn render_tile(prep: &Prepared, bins: &TileBins, t: usize, background: &[f64; 3]) -> TileOutput {
    let n = bins.lists[t].len();
    let (x0, x1, y0, y1) = bins.bounds(t);
    let tw = x1 - x0;
    let mut out = TileOutput {
        pixels: vec![PixelResult::default(); (tw * (y1 - y0)) as usize],
        count: vec![0; n],
        weight: vec![FixedSum::ZERO; n],
        max_count: vec![0; n],
    };
    for block in bins.blocks(prep, t) {
        for py in block.y0..block.y1 {
            for px in block.x0..block.x1 {
                let (res, best) =
                    composite_pixel(&block.splats, f64::from(px), f64::from(py), background, |k, w| {
                        let slot = block.slots[k] as usize;
                        out.count[slot] += 1;
                        out.weight[slot].add(w);
                    });
                if let Some(k) = best {
                    out.max_count[block.slots[k] as usize] += 1;
                }
                out.pixels[((py - y0) * tw + px - x0) as usize] = res;
            }
        }
    }
    out
}

/// Tiled forward render of `cloud` from `cam`.
pub fn render_forward(cloud: &GaussianCloud, cam: &Camera, opts: &RenderOptions) -> RenderOutput {
    let prep = prepare(cloud, cam, opts);
    let bins = TileBins::build(&prep, cam.width, cam.height, opts.tile_size);
    let tiles: Vec<TileOutput> = (0..bins.lists.len())
        .into_par_iter()
        .map(|t| render_tile(&prep, &bins, t, &opts.background))
        .collect();

    let n_pix = cam.pixel_count();
    let mut color = Image::new(cam.width, cam.height);
    let mut depth = vec![0.0; n_pix];
    let mut final_transmittance = vec![1.0; n_pix];
    let mut weight_total = vec![0.0; n_pix];
    let n = cloud.len();
    let mut counts = vec![0u32; n];
    let mut weights = vec![FixedSum::ZERO; n];
    let mut max_counts = vec![0u32; n];

    for (t, tile) in tiles.iter().enumerate() {
        let (x0, x1, y0, y1) = bins.bounds(t);
        let mut k = 0;
        for py in y0..y1 {
            for px in x0..x1 {
                let p = (py * cam.width + px) as usize;
                let r = &tile.pixels[k];
                color.data[3 * p..3 * p + 3].copy_from_slice(&r.color);
                depth[p] = r.depth;
                final_transmittance[p] = r.transmittance;
                weight_total[p] = r.weight_total;
                k += 1;
            }
        }
        for (slot, &id) in bins.lists[t].iter().enumerate() {
            let i = id as usize;
            counts[i] += tile.count[slot];
            weights[i].merge(tile.weight[slot]);
            max_counts[i] += tile.max_count[slot];
        }
    }

    RenderOutput {
        color,
        depth,
        final_transmittance,
        weight_total,
        stats: PerGaussianViewStats {
            pixel_count: counts,
            weight_sum: weights.into_iter().map(FixedSum::value).collect(),
            max_weight_pixels: max_counts,
        },
    }
}
