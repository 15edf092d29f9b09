//! Exact K-nearest-neighbour mean distances over primitive centers.

use nalgebra::Vector3;

use crate::cloud::GaussianCloud;

/// Mean distance to the nearest other centers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KnnDistance {
    pub mean: f64,
    /// Neighbours actually used; less than K when the cloud is too small.
    pub neighbors: usize,
}

impl KnnDistance {
    pub fn shortfall(&self, k: usize) -> usize {
        k.saturating_sub(self.neighbors)
    }
}

fn dist(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let d = a - b;
    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
}

/// Average of the `k` smallest values; summing in ascending order makes the
/// result independent of how candidates were found.
fn mean_of_smallest(mut d: Vec<f64>, k: usize) -> KnnDistance {
    d.sort_by(f64::total_cmp);
    d.truncate(k);
    let neighbors = d.len();
    let mean = if neighbors == 0 { 0.0 } else { d.iter().sum::<f64>() / neighbors as f64 };
    KnnDistance { mean, neighbors }
}

/// O(N) scan per query; the reference result.
pub fn knn_mean_distance_exhaustive(positions: &[Vector3<f64>], i: usize, k: usize) -> KnnDistance {
    let p = positions[i];
    let d = positions.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| dist(&p, q)).collect();
    mean_of_smallest(d, k)
}

/// Uniform grid over the centers, searched in growing Chebyshev shells.
pub struct KnnIndex<'a> {
    positions: &'a [Vector3<f64>],
    origin: Vector3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

const BRUTE_FORCE_BELOW: usize = 64;

impl<'a> KnnIndex<'a> {
    pub fn new(positions: &'a [Vector3<f64>]) -> Self {
        let n = positions.len();
        let (mut lo, mut hi) = (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY));
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if n == 0 {
            lo = Vector3::zeros();
            hi = Vector3::zeros();
        }
        let ext = hi - lo;
        // about two points per occupied cell for a volume-filling cloud
        let vol = ext.iter().map(|e| e.max(1e-12)).product::<f64>();
        let mut cell = (2.0 * vol / n.max(1) as f64).cbrt();
        let longest = ext.max();
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        // keep the grid bounded for flat or stretched clouds
        cell = cell.max(longest / 128.0);
        if cell == 0.0 {
            cell = 1.0;
        }
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).min(1 << 10));
        let mut index = Self { positions, origin: lo, cell, dims, starts: Vec::new(), items: Vec::new() };
        let cells = dims[0] * dims[1] * dims[2];
        let keys: Vec<usize> = positions.iter().map(|p| index.flat(index.coords(p))).collect();
        let mut counts = vec![0usize; cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for c in 0..cells {
            counts[c + 1] += counts[c];
        }
        let mut fill = counts.clone();
        let mut items = vec![0; n];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k]] = i;
            fill[k] += 1;
        }
        index.starts = counts;
        index.items = items;
        index
    }

    pub fn from_cloud(cloud: &'a GaussianCloud) -> Self {
        Self::new(&cloud.positions)
    }

    fn coords(&self, p: &Vector3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.origin[a]) / self.cell).floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[usize] {
        let f = self.flat(c);
        &self.items[self.starts[f]..self.starts[f + 1]]
    }

    /// Exact mean distance from center `i` to its `k` nearest other centers.
    pub fn mean_distance(&self, i: usize, k: usize) -> KnnDistance {
        let n = self.positions.len();
        if n < BRUTE_FORCE_BELOW || k + 1 >= n {
            return knn_mean_distance_exhaustive(self.positions, i, k);
        }
        let p = self.positions[i];
        let c = self.coords(&p);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1);
        let mut found: Vec<f64> = Vec::new();
        for ring in 0..=max_ring {
            let r = ring as isize;
            let lo = [0, 1, 2].map(|a| (c[a] as isize - r).max(0) as usize);
            let hi = [0, 1, 2].map(|a| ((c[a] as isize + r) as usize).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let on_shell = [x, y, z].iter().zip(&c).any(|(&v, &cv)| v.abs_diff(cv) == ring);
                        if !on_shell {
                            continue;
                        }
                        for &j in self.cell_items([x, y, z]) {
                            if j != i {
                                found.push(dist(&p, &self.positions[j]));
                            }
                        }
                    }
                }
            }
            if found.len() >= k {
                // anything outside shells 0..=ring is at least `ring * cell` away
                found.sort_by(f64::total_cmp);
                found.truncate(k);
                if found[k - 1] <= ring as f64 * self.cell {
                    return mean_of_smallest(found, k);
                }
            }
        }
        mean_of_smallest(found, k)
    }
}

/// Exact KNN mean distance of primitive `i`; builds a throwaway index.
pub fn knn_mean_distance(i: usize, cloud: &GaussianCloud, k: usize) -> KnnDistance {
    KnnIndex::from_cloud(cloud).mean_distance(i, k)
}
