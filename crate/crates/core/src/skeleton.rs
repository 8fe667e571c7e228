//! Vessel surface extraction and curve-skeleton thinning.
//!
//! Thinning follows the Lee–Kashyap–Chu scheme: six directional
//! sub-iterations per pass, each collecting border voxels that are simple
//! and not curve endpoints, then re-checking and deleting them one by one in
//! linear-index order. Passes repeat until nothing changes.
//!
//! A voxel is simple when removing it changes neither the 26-connected
//! foreground topology nor the 6-connected background topology of its
//! 3×3×3 neighbourhood (T26 = 1 and T6-bar = 1).

use std::sync::OnceLock;

use crate::volume::{Dims, MaskVolume, Spacing, VoxelCoord, N6};

/// Foreground voxels with at least one background 6-neighbour.
///
/// Each voxel also records which of its six faces are exposed: bit `k` is
/// set when the neighbour at `N6[k]` is background (or off-grid).
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSet {
    dims: Dims,
    spacing: Spacing,
    indices: Vec<usize>,
    faces: Vec<u8>,
}

impl SurfaceSet {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    /// Linear indices in ascending order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn voxels(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        self.indices.iter().map(|&i| self.dims.coord(i))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Exposed-face bits of each voxel, aligned with [`indices`](Self::indices).
    pub fn faces(&self) -> &[u8] {
        &self.faces
    }

    pub fn to_mask(&self) -> MaskVolume {
        MaskVolume::from_indices(self.dims, self.spacing, &self.indices)
    }
}

/// A one-voxel-thick centerline, sorted by linear index.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    dims: Dims,
    spacing: Spacing,
    indices: Vec<usize>,
}

impl Skeleton {
    /// Builds a skeleton from arbitrary voxel indices (sorted and deduplicated).
    pub fn from_indices(dims: Dims, spacing: Spacing, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Skeleton {
            dims,
            spacing,
            indices,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn voxels(&self) -> impl Iterator<Item = VoxelCoord> + '_ {
        self.indices.iter().map(|&i| self.dims.coord(i))
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn to_mask(&self) -> MaskVolume {
        MaskVolume::from_indices(self.dims, self.spacing, &self.indices)
    }
}

pub fn extract_surface(mask: &MaskVolume) -> SurfaceSet {
    let dims = mask.dims();
    let mut indices = Vec::new();
    let mut faces = Vec::new();
    for i in mask.foreground() {
        let c = dims.coord(i);
        let mut bits = 0u8;
        for (k, d) in N6.iter().enumerate() {
            let exposed = match dims.offset_index(c, *d) {
                Some(j) => !mask.data()[j],
                None => true,
            };
            if exposed {
                bits |= 1 << k;
            }
        }
        if bits != 0 {
            indices.push(i);
            faces.push(bits);
        }
    }
    SurfaceSet {
        dims,
        spacing: mask.spacing(),
        indices,
        faces,
    }
}

/// Border directions in the order they are visited within each pass:
/// up (+z), down (−z), north (+y), south (−y), east (+x), west (−x).
pub const DIRECTION_ORDER: [[isize; 3]; 6] = [
    [0, 0, 1],
    [0, 0, -1],
    [0, 1, 0],
    [0, -1, 0],
    [1, 0, 0],
    [-1, 0, 0],
];

const CENTER: usize = 13;

#[cfg(test)]
fn cube_pos(dx: isize, dy: isize, dz: isize) -> usize {
    ((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize
}

fn cube_offset(p: usize) -> [isize; 3] {
    [
        (p % 3) as isize - 1,
        ((p / 3) % 3) as isize - 1,
        (p / 9) as isize - 1,
    ]
}

struct NeighbourhoodTables {
    adj26: [u32; 27],
    adj6: [u32; 27],
    n6: u32,
    n18: u32,
    n26: u32,
}

fn tables() -> &'static NeighbourhoodTables {
    static TABLES: OnceLock<NeighbourhoodTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut t = NeighbourhoodTables {
            adj26: [0; 27],
            adj6: [0; 27],
            n6: 0,
            n18: 0,
            n26: 0,
        };
        for p in 0..27 {
            if p == CENTER {
                continue;
            }
            let a = cube_offset(p);
            let nonzero = a.iter().filter(|v| **v != 0).count();
            t.n26 |= 1 << p;
            if nonzero <= 2 {
                t.n18 |= 1 << p;
            }
            if nonzero == 1 {
                t.n6 |= 1 << p;
            }
            for q in 0..27 {
                if q == CENTER || q == p {
                    continue;
                }
                let b = cube_offset(q);
                let diff: Vec<isize> = (0..3).map(|k| (a[k] - b[k]).abs()).collect();
                if diff.iter().all(|d| *d <= 1) {
                    t.adj26[p] |= 1 << q;
                }
                if diff.iter().sum::<isize>() == 1 {
                    t.adj6[p] |= 1 << q;
                }
            }
        }
        t
    })
}

/// Counts connected components of `set` under `adj`, keeping only those
/// that intersect `touch`. Stops early once the count exceeds one.
fn components_touching(set: u32, adj: &[u32; 27], touch: u32) -> u32 {
    let mut remaining = set;
    let mut count = 0;
    while remaining != 0 {
        let start = remaining & remaining.wrapping_neg();
        let mut comp = start;
        let mut frontier = start;
        while frontier != 0 {
            let mut next = 0;
            let mut f = frontier;
            while f != 0 {
                let b = f.trailing_zeros() as usize;
                next |= adj[b];
                f &= f - 1;
            }
            next &= set & !comp;
            comp |= next;
            frontier = next;
        }
        remaining &= !comp;
        if comp & touch != 0 {
            count += 1;
            if count > 1 {
                break;
            }
        }
    }
    count
}

/// Whether the center of a 3×3×3 neighbourhood (bit `p` set = foreground
/// at cube position `p`) is a simple point.
pub(crate) fn is_simple(neighbourhood: u32) -> bool {
    let t = tables();
    let fg = neighbourhood & t.n26;
    if components_touching(fg, &t.adj26, t.n26) != 1 {
        return false;
    }
    let bg = !neighbourhood & t.n18;
    components_touching(bg, &t.adj6, t.n6) == 1
}

/// Working copy of the mask with a one-voxel background border, so that
/// neighbourhood reads never leave the buffer.
struct PaddedGrid {
    nx: usize,
    ny: usize,
    data: Vec<u8>,
    cube: [isize; 27],
}

impl PaddedGrid {
    fn new(mask: &MaskVolume) -> Self {
        let d = mask.dims();
        let (nx, ny, nz) = (d.nx + 2, d.ny + 2, d.nz + 2);
        let mut data = vec![0u8; nx * ny * nz];
        for (i, v) in mask.data().iter().enumerate() {
            if *v {
                let c = d.coord(i);
                data[(c.x + 1) + nx * ((c.y + 1) + ny * (c.z + 1))] = 1;
            }
        }
        let mut cube = [0isize; 27];
        for (p, slot) in cube.iter_mut().enumerate() {
            let o = cube_offset(p);
            *slot = o[0] + nx as isize * (o[1] + ny as isize * o[2]);
        }
        PaddedGrid { nx, ny, data, cube }
    }

    #[inline]
    fn offset(&self, d: [isize; 3]) -> isize {
        d[0] + self.nx as isize * (d[1] + self.ny as isize * d[2])
    }

    #[inline]
    fn neighbourhood(&self, i: usize) -> u32 {
        let mut bits = 0u32;
        for (p, off) in self.cube.iter().enumerate() {
            if p != CENTER && self.data[(i as isize + off) as usize] != 0 {
                bits |= 1 << p;
            }
        }
        bits
    }

    fn unpad(&self, i: usize, dims: Dims) -> usize {
        let x = i % self.nx - 1;
        let y = (i / self.nx) % self.ny - 1;
        let z = i / (self.nx * self.ny) - 1;
        x + dims.nx * (y + dims.ny * z)
    }
}

#[inline]
fn deletable(neighbourhood: u32) -> bool {
    // endpoints (exactly one 26-neighbour) are kept
    neighbourhood.count_ones() != 1 && is_simple(neighbourhood)
}

/// Topology-preserving thinning of a binary mask to a curve skeleton.
pub fn skeletonize(mask: &MaskVolume) -> Skeleton {
    let dims = mask.dims();
    let mut grid = PaddedGrid::new(mask);
    let mut active: Vec<usize> = grid
        .data
        .iter()
        .enumerate()
        .filter_map(|(i, v)| (*v != 0).then_some(i))
        .collect();
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for dir in DIRECTION_ORDER {
            let off = grid.offset(dir);
            candidates.clear();
            for &i in &active {
                if grid.data[(i as isize + off) as usize] != 0 {
                    continue;
                }
                if deletable(grid.neighbourhood(i)) {
                    candidates.push(i);
                }
            }
            let mut removed = false;
            for &i in &candidates {
                if deletable(grid.neighbourhood(i)) {
                    grid.data[i] = 0;
                    removed = true;
                }
            }
            if removed {
                changed = true;
                active.retain(|&i| grid.data[i] != 0);
            }
        }
        if !changed {
            break;
        }
    }
    let indices = active.iter().map(|&i| grid.unpad(i, dims)).collect();
    Skeleton {
        dims,
        spacing: mask.spacing(),
        indices,
    }
}

/// 26-neighbourhood bitmask of a voxel in an unpadded mask (test helper).
#[cfg(test)]
fn neighbourhood_of(mask: &MaskVolume, c: VoxelCoord) -> u32 {
    let mut bits = 0;
    for dz in -1..=1 {
        for dy in -1..=1 {
            for dx in -1..=1 {
                let p = cube_pos(dx, dy, dz);
                if p != CENTER
                    && mask.is_set(c.x as isize + dx, c.y as isize + dy, c.z as isize + dz)
                {
                    bits |= 1 << p;
                }
            }
        }
    }
    bits
}
