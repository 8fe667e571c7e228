//! Seeded random vessel trees for the acceptance suite.

#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vessel_scales::phantom::{PhantomSpec, Segment};

#[derive(Debug, Clone, Copy)]
pub struct TreeShape {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub segments: usize,
    pub root_radius: (f64, f64),
    pub min_radius: f64,
}

fn norm(v: [f64; 3]) -> [f64; 3] {
    let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / l, v[1] / l, v[2] / l]
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let l2: f64 = v.iter().map(|x| x * x).sum();
        if l2 > 0.05 && l2 <= 1.0 {
            return norm(v);
        }
    }
}

/// Binary tree grown from a root near the volume centre: every segment
/// ends in a bifurcation whose children are thinner and bent away from the
/// parent direction. Endpoints are clamped into the volume with a margin.
pub fn random_tree(seed: u64, shape: TreeShape) -> PhantomSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent: Vec<f64> = (0..3)
        .map(|a| (shape.dims[a] - 1) as f64 * shape.spacing[a])
        .collect();
    let size = extent.iter().cloned().fold(f64::INFINITY, f64::min);
    let clamp = |p: [f64; 3], r: f64| -> [f64; 3] {
        let mut q = p;
        for a in 0..3 {
            q[a] = q[a].clamp(r + 1.0, extent[a] - r - 1.0);
        }
        q
    };

    let r0 = rng.gen_range(shape.root_radius.0..shape.root_radius.1);
    let start = clamp(
        [
            extent[0] * rng.gen_range(0.3..0.7),
            extent[1] * rng.gen_range(0.3..0.7),
            extent[2] * rng.gen_range(0.1..0.3),
        ],
        r0,
    );
    let dir = norm([rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0]);
    // (start, direction, radius)
    let mut frontier = vec![(start, dir, r0)];
    let mut segments = Vec::new();
    while segments.len() < shape.segments {
        if frontier.is_empty() {
            break;
        }
        let (a, d, r) = frontier.remove(0);
        let len = size * rng.gen_range(0.15..0.3) + 3.0 * r;
        let b = clamp([a[0] + d[0] * len, a[1] + d[1] * len, a[2] + d[2] * len], r);
        let seg_len =
            ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
        if seg_len < 2.0 * r {
            continue;
        }
        segments.push(Segment {
            start: a,
            end: b,
            radius_mm: r,
            id: segments.len() as u32 + 1,
        });
        for _ in 0..2 {
            let cr = r * rng.gen_range(0.55..0.85);
            if cr < shape.min_radius {
                continue;
            }
            let bend = random_unit(&mut rng);
            let cd = norm([
                d[0] + 0.9 * bend[0],
                d[1] + 0.9 * bend[1],
                d[2] + 0.9 * bend[2],
            ]);
            frontier.push((b, cd, cr));
        }
    }
    PhantomSpec {
        dims: shape.dims,
        spacing_mm: shape.spacing,
        segments,
    }
}
