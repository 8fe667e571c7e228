//! Dense 3D voxel grids.
//!
//! Voxels are stored x-fastest: `index = x + nx * (y + ny * z)`. Everything
//! outside the grid is treated as background by the neighborhood helpers.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Grid dimensions `(nx, ny, nz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidDims([nx, ny, nz]));
        }
        Ok(Dims { nx, ny, nz })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn index(&self, c: VoxelCoord) -> usize {
        c.x + self.nx * (c.y + self.ny * c.z)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> VoxelCoord {
        let x = index % self.nx;
        let yz = index / self.nx;
        VoxelCoord {
            x,
            y: yz % self.ny,
            z: yz / self.ny,
        }
    }

    #[inline]
    pub fn contains(&self, x: isize, y: isize, z: isize) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.nx
            && (y as usize) < self.ny
            && (z as usize) < self.nz
    }

    /// Linear index of `c + offset`, or `None` when it falls off the grid.
    #[inline]
    pub fn offset_index(&self, c: VoxelCoord, d: [isize; 3]) -> Option<usize> {
        let x = c.x as isize + d[0];
        let y = c.y as isize + d[1];
        let z = c.z as isize + d[2];
        self.contains(x, y, z)
            .then(|| x as usize + self.nx * (y as usize + self.ny * z as usize))
    }
}

/// Physical voxel size in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = [sx, sy, sz];
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpacing(s));
        }
        Ok(Spacing(s))
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn unit() -> Self {
        Spacing([1.0; 3])
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0[0] * c, self.0[1] * c, self.0[2] * c)
    }

    /// Squared physical distance between two voxel centers.
    ///
    /// Summation order is fixed (x, then y, then z) so that every distance in
    /// the crate is computed with identical rounding.
    #[inline]
    pub fn sq_dist(&self, a: VoxelCoord, b: VoxelCoord) -> f64 {
        let dx = self.0[0] * (a.x as f64 - b.x as f64);
        let dy = self.0[1] * (a.y as f64 - b.y as f64);
        let dz = self.0[2] * (a.z as f64 - b.z as f64);
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(&self, a: VoxelCoord, b: VoxelCoord) -> f64 {
        self.sq_dist(a, b).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelCoord {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl VoxelCoord {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        VoxelCoord { x, y, z }
    }
}

impl From<[usize; 3]> for VoxelCoord {
    fn from(c: [usize; 3]) -> Self {
        VoxelCoord::new(c[0], c[1], c[2])
    }
}

/// Voxel adjacency used for component labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [[isize; 3]] {
        match self {
            Connectivity::Six => &N6,
            Connectivity::TwentySix => &N26,
        }
    }

    pub fn as_number(self) -> u8 {
        match self {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidConnectivity(other)),
        }
    }
}

pub const N6: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

pub const N26: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// A dense voxel grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: Dims,
    spacing: Spacing,
    data: Vec<T>,
}

/// Binary mask payload.
pub type MaskVolume = Volume<bool>;
/// Branch-label payload; 0 is background.
pub type LabelVolume = Volume<u32>;
/// Scalar payload.
pub type ScalarVolume = Volume<f32>;

impl<T: Clone> Volume<T> {
    pub fn filled(dims: Dims, spacing: Spacing, value: T) -> Self {
        Volume {
            dims,
            spacing,
            data: vec![value; dims.len()],
        }
    }
}

impl<T> Volume<T> {
    pub fn from_vec(dims: Dims, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::DataLength {
                expected: dims.len(),
                found: data.len(),
            });
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, c: VoxelCoord) -> &T {
        &self.data[self.dims.index(c)]
    }

    pub fn set(&mut self, c: VoxelCoord, value: T) {
        let i = self.dims.index(c);
        self.data[i] = value;
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn same_grid<U>(&self, other: &Volume<U>) -> bool {
        self.dims == other.dims
    }
}

impl MaskVolume {
    pub fn empty(dims: Dims, spacing: Spacing) -> Self {
        Volume::filled(dims, spacing, false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Foreground voxel indices in ascending linear order.
    pub fn foreground(&self) -> Vec<usize> {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.then_some(i))
            .collect()
    }

    pub fn from_indices(dims: Dims, spacing: Spacing, indices: &[usize]) -> Self {
        let mut m = MaskVolume::empty(dims, spacing);
        for &i in indices {
            m.data[i] = true;
        }
        m
    }

    pub fn is_set(&self, x: isize, y: isize, z: isize) -> bool {
        self.dims.contains(x, y, z)
            && self.data[x as usize + self.dims.nx * (y as usize + self.dims.ny * z as usize)]
    }
}

impl LabelVolume {
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }
}

/// Nearest-neighbour resampling onto `target` dims.
///
/// Output voxel `k` along an axis of length `n_out` samples source voxel
/// `floor((2k + 1) * n_in / (2 * n_out))`, i.e. the source voxel whose extent
/// contains the output voxel center (the upper one on exact boundaries). The
/// physical extent is preserved, so spacing scales by `n_in / n_out`.
pub fn resample_nearest<T: Clone>(v: &Volume<T>, target: Dims) -> Volume<T> {
    let src = v.dims();
    let map = |n_in: usize, n_out: usize| -> Vec<usize> {
        (0..n_out)
            .map(|k| ((2 * k + 1) * n_in) / (2 * n_out))
            .collect()
    };
    let mx = map(src.nx, target.nx);
    let my = map(src.ny, target.ny);
    let mz = map(src.nz, target.nz);
    let s = v.spacing().0;
    let spacing = Spacing([
        s[0] * src.nx as f64 / target.nx as f64,
        s[1] * src.ny as f64 / target.ny as f64,
        s[2] * src.nz as f64 / target.nz as f64,
    ]);
    if target == src {
        return v.clone();
    }
    let mut data = Vec::with_capacity(target.len());
    for &z in &mz {
        for &y in &my {
            let row = src.nx * (y + src.ny * z);
            for &x in &mx {
                data.push(v.data[row + x].clone());
            }
        }
    }
    Volume {
        dims: target,
        spacing,
        data,
    }
}

/// Labels connected foreground components.
///
/// Components are numbered 1..=count in ascending order of their smallest
/// linear index.
pub fn connected_components(mask: &MaskVolume, conn: Connectivity) -> (LabelVolume, usize) {
    let dims = mask.dims();
    let mut labels = Volume::filled(dims, mask.spacing(), 0u32);
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for seed in 0..dims.len() {
        if !mask.data[seed] || labels.data[seed] != 0 {
            continue;
        }
        count += 1;
        labels.data[seed] = count;
        queue.push_back(seed);
        while let Some(i) = queue.pop_front() {
            let c = dims.coord(i);
            for d in conn.offsets() {
                if let Some(j) = dims.offset_index(c, *d) {
                    if mask.data[j] && labels.data[j] == 0 {
                        labels.data[j] = count;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, count as usize)
}
