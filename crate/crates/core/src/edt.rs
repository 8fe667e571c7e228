//! Exact Euclidean feature transform on anisotropic grids.
//!
//! Separable lower-envelope algorithm (one pass per axis) with index
//! propagation. Each voxel receives the seed minimising the key
//! `(squared distance, seed rank)`; seed rank is the seed's position in the
//! caller's list, so callers encode their tie rule by ordering the seeds.
//!
//! Envelope breakpoints are resolved on the integer lattice by evaluating
//! both parabolas exactly, so ties are decided by rank rather than by a
//! rounded intersection abscissa. Squared distances are accumulated x, then
//! y, then z, matching [`Spacing::sq_dist`].

use crate::volume::{Dims, Spacing, VoxelCoord};

/// Nearest seed of one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub sq_dist: f64,
    /// Position of the seed in the input list.
    pub seed: u32,
}

const NONE: u32 = u32::MAX;

/// Sub-grid `[lo, hi)` on which the transform is evaluated.
#[derive(Debug, Clone, Copy)]
struct Window {
    lo: [usize; 3],
    n: [usize; 3],
}

impl Window {
    fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    fn local(&self, c: VoxelCoord) -> usize {
        (c.x - self.lo[0]) + self.n[0] * ((c.y - self.lo[1]) + self.n[1] * (c.z - self.lo[2]))
    }
}

/// Result of [`feature_transform`], evaluated over the bounding box of the
/// seeds and the requested query voxels.
pub struct FeatureMap {
    window: Window,
    dist: Vec<f64>,
    seed: Vec<u32>,
}

impl FeatureMap {
    /// Nearest seed for a voxel inside the evaluated window.
    pub fn get(&self, c: VoxelCoord) -> Option<Feature> {
        let w = &self.window;
        let inside = (0..3).all(|k| {
            let v = [c.x, c.y, c.z][k];
            v >= w.lo[k] && v < w.lo[k] + w.n[k]
        });
        if !inside {
            return None;
        }
        let i = w.local(c);
        (self.seed[i] != NONE).then(|| Feature {
            sq_dist: self.dist[i],
            seed: self.seed[i],
        })
    }
}

/// Computes, for every voxel in the bounding box of `seeds ∪ queries`, the
/// nearest seed under physical distance with ties going to the lower seed
/// position. Both inputs are linear indices into `dims`.
pub fn feature_transform(
    dims: Dims,
    spacing: Spacing,
    seeds: &[usize],
    queries: &[usize],
) -> FeatureMap {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &i in seeds.iter().chain(queries) {
        let c = dims.coord(i);
        let c = [c.x, c.y, c.z];
        for k in 0..3 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k] + 1);
        }
    }
    if seeds.is_empty() && queries.is_empty() {
        lo = [0; 3];
        hi = [0; 3];
    }
    let window = Window {
        lo,
        n: [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]],
    };
    let mut dist = vec![f64::INFINITY; window.len()];
    let mut seed = vec![NONE; window.len()];
    for (rank, &i) in seeds.iter().enumerate() {
        let j = window.local(dims.coord(i));
        // duplicates keep the lowest rank
        if seed[j] == NONE {
            dist[j] = 0.0;
            seed[j] = rank as u32;
        }
    }
    if !seeds.is_empty() {
        let mut pass = LinePass::default();
        for axis in 0..3 {
            sweep_axis(
                &window,
                axis,
                spacing.0[axis],
                &mut dist,
                &mut seed,
                &mut pass,
            );
        }
    }
    FeatureMap { window, dist, seed }
}

fn sweep_axis(
    w: &Window,
    axis: usize,
    s: f64,
    dist: &mut [f64],
    seed: &mut [u32],
    pass: &mut LinePass,
) {
    let n = w.n;
    let stride = match axis {
        0 => 1,
        1 => n[0],
        _ => n[0] * n[1],
    };
    let len = n[axis];
    let (outer_a, outer_b) = match axis {
        0 => (n[1], n[2]),
        1 => (n[0], n[2]),
        _ => (n[0], n[1]),
    };
    for b in 0..outer_b {
        for a in 0..outer_a {
            let start = match axis {
                0 => n[0] * (a + n[1] * b),
                1 => a + n[0] * n[1] * b,
                _ => a + n[0] * b,
            };
            pass.run(start, stride, len, s, dist, seed);
        }
    }
}

#[derive(Default)]
struct LinePass {
    // envelope: (site position, first lattice position it owns)
    env: Vec<(usize, usize)>,
    g: Vec<f64>,
    r: Vec<u32>,
}

impl LinePass {
    fn run(
        &mut self,
        start: usize,
        stride: usize,
        len: usize,
        s: f64,
        dist: &mut [f64],
        seed: &mut [u32],
    ) {
        self.g.clear();
        self.r.clear();
        for k in 0..len {
            let i = start + k * stride;
            self.g.push(dist[i]);
            self.r.push(seed[i]);
        }
        let g = &self.g;
        let r = &self.r;
        let value = |site: usize, x: usize| -> f64 {
            let d = s * (x as f64 - site as f64);
            g[site] + d * d
        };
        // does site q (right of v) win at x?
        let beats = |q: usize, v: usize, x: usize| -> bool {
            let (fq, fv) = (value(q, x), value(v, x));
            fq < fv || (fq == fv && r[q] < r[v])
        };
        self.env.clear();
        for (q, &rq) in r.iter().enumerate().take(len) {
            if rq == NONE {
                continue;
            }
            loop {
                let Some(&(v, a)) = self.env.last() else {
                    self.env.push((q, 0));
                    break;
                };
                if beats(q, v, a) {
                    self.env.pop();
                    continue;
                }
                // first lattice position in (a, len) where q wins, if any
                let (mut lo, mut hi) = (a, len);
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if beats(q, v, mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if hi < len {
                    self.env.push((q, hi));
                }
                break;
            }
        }
        if self.env.is_empty() {
            return;
        }
        let mut k = 0;
        for x in 0..len {
            while k + 1 < self.env.len() && self.env[k + 1].1 <= x {
                k += 1;
            }
            let site = self.env[k].0;
            let i = start + x * stride;
            dist[i] = value(site, x);
            seed[i] = r[site];
        }
    }
}
