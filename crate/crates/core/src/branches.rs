//! Branch decomposition of a curve skeleton, local and per-branch radius
//! estimation, and volumetric branch reconstruction.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::edt::feature_transform;
use crate::error::{Error, Result};
use crate::skeleton::{skeletonize, Skeleton, SurfaceSet};
use crate::volume::{Dims, LabelVolume, MaskVolume, Spacing, Volume, VoxelCoord, N26, N6};

/// Default number of nearest surface voxels used per local radius.
pub const DEFAULT_NEIGHBOURS: usize = 8;

/// Skeleton voxels with their branch ids (1..=n_branches).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSkeleton {
    dims: Dims,
    spacing: Spacing,
    indices: Vec<usize>,
    labels: Vec<u32>,
    n_branches: u32,
}

impl LabeledSkeleton {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Linear indices, ascending.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Branch id of each entry of [`indices`](Self::indices).
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn n_branches(&self) -> u32 {
        self.n_branches
    }

    pub fn entries(&self) -> impl Iterator<Item = (VoxelCoord, u32)> + '_ {
        self.indices
            .iter()
            .zip(&self.labels)
            .map(|(&i, &l)| (self.dims.coord(i), l))
    }

    pub fn label_of(&self, c: VoxelCoord) -> Option<u32> {
        let i = self.dims.index(c);
        self.indices.binary_search(&i).ok().map(|k| self.labels[k])
    }

    pub fn to_volume(&self) -> LabelVolume {
        let mut v = Volume::filled(self.dims, self.spacing, 0u32);
        for (&i, &l) in self.indices.iter().zip(&self.labels) {
            v.data_mut()[i] = l;
        }
        v
    }
}

/// Splits a skeleton into branches at junction voxels.
///
/// Voxels with three or more 26-neighbours on the skeleton are junctions.
/// With junctions removed, every remaining 26-connected run is a branch;
/// ids follow the smallest linear index of each run. Junction voxels then
/// join the adjacent branch with the lowest id, spreading outward through
/// junction clusters one ring at a time. A junction cluster touching no
/// branch becomes a branch of its own.
pub fn label_branches(skel: &Skeleton) -> Result<LabeledSkeleton> {
    if skel.is_empty() {
        return Err(Error::EmptySkeleton);
    }
    let dims = skel.dims();
    let idx = skel.indices();
    let neighbours = adjacency(skel);
    let junction: Vec<bool> = neighbours.iter().map(|n| n.len() >= 3).collect();

    // Runs of regular voxels, and junction clusters that touch no run, in
    // order of their first (smallest) voxel.
    let n = idx.len();
    let mut group = vec![usize::MAX; n];
    let mut groups = 0usize;
    let mut flood = |start: usize, group: &mut Vec<usize>, is_junction: bool| {
        let mut members = vec![start];
        group[start] = groups;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &j in &neighbours[k] {
                if junction[j] == is_junction && group[j] == usize::MAX {
                    group[j] = groups;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        groups += 1;
        members
    };
    let mut label = vec![0u32; n];
    let mut group_is_branch = Vec::new();
    for k in 0..n {
        if group[k] != usize::MAX {
            continue;
        }
        if junction[k] {
            let members = flood(k, &mut group, true);
            let orphan = members
                .iter()
                .all(|&m| neighbours[m].iter().all(|&j| junction[j]));
            group_is_branch.push(orphan);
        } else {
            flood(k, &mut group, false);
            group_is_branch.push(true);
        }
    }
    // groups were discovered in ascending order of their smallest voxel
    let mut next_id = 0u32;
    let group_id: Vec<u32> = group_is_branch
        .iter()
        .map(|&b| {
            if b {
                next_id += 1;
                next_id
            } else {
                0
            }
        })
        .collect();
    for k in 0..n {
        label[k] = group_id[group[k]];
    }

    loop {
        let updates: Vec<(usize, u32)> = (0..n)
            .filter(|&k| label[k] == 0)
            .filter_map(|k| {
                neighbours[k]
                    .iter()
                    .map(|&j| label[j])
                    .filter(|&l| l != 0)
                    .min()
                    .map(|l| (k, l))
            })
            .collect();
        if updates.is_empty() {
            break;
        }
        for (k, l) in updates {
            label[k] = l;
        }
    }
    debug_assert!(label.iter().all(|&l| l != 0));

    Ok(LabeledSkeleton {
        dims,
        spacing: skel.spacing(),
        indices: idx.to_vec(),
        labels: label,
        n_branches: next_id,
    })
}

/// Default spur-pruning factor (see [`prune_spurs`]).
pub const DEFAULT_PRUNE_FACTOR: f64 = 1.5;

/// Skeleton adjacency: per voxel, positions of its 26-neighbours.
fn adjacency(skel: &Skeleton) -> Vec<Vec<usize>> {
    let dims = skel.dims();
    let idx = skel.indices();
    let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    idx.iter()
        .map(|&i| {
            let c = dims.coord(i);
            N26.iter()
                .filter_map(|d| dims.offset_index(c, *d))
                .filter_map(|j| pos.get(&j).copied())
                .collect()
        })
        .collect()
}

/// Removes spurs: terminal branches whose arc length (from the free end to
/// the junction it hangs from) is at most `factor` times the largest local
/// radius in that junction cluster. Such branches are artifacts of thinning
/// a bulge, e.g. the rounded end of a thick vessel where thinner ones leave.
///
/// One pass; removing a terminal run never disconnects the skeleton and the
/// result is thinned again.
/// `factor <= 0` returns the skeleton unchanged.
pub fn prune_spurs(skel: &Skeleton, lr: &LocalRadiusMap, factor: f64) -> Result<Skeleton> {
    if lr.indices() != skel.indices() {
        return Err(Error::VoxelSetMismatch);
    }
    if factor <= 0.0 || skel.is_empty() {
        return Ok(skel.clone());
    }
    let dims = skel.dims();
    let spacing = skel.spacing();
    let idx = skel.indices();
    let n = idx.len();
    let neighbours = adjacency(skel);
    let junction: Vec<bool> = neighbours.iter().map(|v| v.len() >= 3).collect();

    // junction clusters and their largest local radius
    let mut cluster = vec![usize::MAX; n];
    let mut cluster_radius = Vec::new();
    for k in 0..n {
        if !junction[k] || cluster[k] != usize::MAX {
            continue;
        }
        let id = cluster_radius.len();
        let mut r = 0.0f64;
        let mut queue = VecDeque::from([k]);
        cluster[k] = id;
        while let Some(a) = queue.pop_front() {
            r = r.max(lr.radii[a]);
            for &b in &neighbours[a] {
                if junction[b] && cluster[b] == usize::MAX {
                    cluster[b] = id;
                    queue.push_back(b);
                }
            }
        }
        cluster_radius.push(r);
    }

    let dist = |a: usize, b: usize| spacing.dist(dims.coord(idx[a]), dims.coord(idx[b]));
    let mut keep = vec![true; n];
    for start in 0..n {
        // walk every run from its free end
        if junction[start] || neighbours[start].len() != 1 {
            continue;
        }
        let mut path = vec![start];
        let mut length = 0.0;
        let mut prev = usize::MAX;
        let mut cur = start;
        let attach = loop {
            let next = neighbours[cur].iter().copied().find(|&b| b != prev);
            match next {
                None => break None,
                Some(b) if junction[b] => {
                    length += dist(cur, b);
                    break Some(b);
                }
                Some(b) => {
                    length += dist(cur, b);
                    path.push(b);
                    prev = cur;
                    cur = b;
                }
            }
        };
        if let Some(j) = attach {
            if length <= factor * cluster_radius[cluster[j]] {
                for k in path {
                    keep[k] = false;
                }
            }
        }
    }
    if keep.iter().all(|&k| k) {
        return Ok(skel.clone());
    }
    let kept = idx
        .iter()
        .zip(&keep)
        .filter_map(|(&i, &k)| k.then_some(i))
        .collect();
    // re-thin to drop the stub left where a spur was attached
    Ok(skeletonize(
        &Skeleton::from_indices(dims, spacing, kept).to_mask(),
    ))
}

/// Local radius (mm) of every skeleton voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRadiusMap {
    dims: Dims,
    indices: Vec<usize>,
    radii: Vec<f64>,
    m: usize,
}

impl LocalRadiusMap {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn get(&self, c: VoxelCoord) -> Option<f64> {
        let i = self.dims.index(c);
        self.indices.binary_search(&i).ok().map(|k| self.radii[k])
    }

    /// Keeps only the entries of voxels present in `skel`.
    pub fn restrict(&self, skel: &Skeleton) -> Self {
        let (indices, radii) = self
            .indices
            .iter()
            .zip(&self.radii)
            .filter(|(i, _)| skel.indices().binary_search(i).is_ok())
            .map(|(&i, &r)| (i, r))
            .unzip();
        LocalRadiusMap {
            dims: self.dims,
            indices,
            radii,
            m: self.m,
        }
    }
}

/// How the distance between a centerline voxel and a surface voxel is
/// measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMetric {
    /// To the surface voxel's center.
    VoxelCenter,
    /// To the nearest exposed face (the face shared with a background
    /// neighbour) of the surface voxel, i.e. to the mask boundary.
    #[default]
    BoundaryFace,
}

/// For each skeleton voxel, the distance to the farthest of its `m` nearest
/// surface voxels (all of them if the surface has fewer than `m`), measured
/// with the default [`RadiusMetric::BoundaryFace`].
pub fn local_radius(
    skel: &Skeleton,
    surface: &SurfaceSet,
    spacing: Spacing,
    m: usize,
) -> Result<LocalRadiusMap> {
    local_radius_with(skel, surface, spacing, m, RadiusMetric::default())
}

/// [`local_radius`] with an explicit distance metric.
///
/// Neighbours are found with an exact shell search over the voxel lattice:
/// shells of growing Chebyshev radius are scanned until no unvisited voxel
/// can be closer than the current `m`-th candidate.
pub fn local_radius_with(
    skel: &Skeleton,
    surface: &SurfaceSet,
    spacing: Spacing,
    m: usize,
    metric: RadiusMetric,
) -> Result<LocalRadiusMap> {
    if m == 0 {
        return Err(Error::InvalidNeighbourCount);
    }
    if surface.is_empty() {
        return Err(Error::EmptySurface);
    }
    let dims = surface.dims();
    // exposed-face bits + 1 per voxel, 0 = not a surface voxel
    let mut lookup = vec![0u8; dims.len()];
    for (&i, &f) in surface.indices().iter().zip(surface.faces()) {
        lookup[i] = match metric {
            RadiusMetric::VoxelCenter => 1,
            RadiusMetric::BoundaryFace => f + 1,
        };
    }
    let s = spacing.0;
    let s_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    // a voxel in shell r is at least r·s_min (center) or (r − ½)·s_min (face) away
    let slack = match metric {
        RadiusMetric::VoxelCenter => 0.0,
        RadiusMetric::BoundaryFace => 0.5,
    };
    let max_shell = dims.nx.max(dims.ny).max(dims.nz);
    let mut best: Vec<f64> = Vec::with_capacity(m + 1);
    let radii = skel
        .voxels()
        .map(|c| {
            best.clear();
            let visit = |x: usize, y: usize, z: usize, best: &mut Vec<f64>| {
                let code = lookup[x + dims.nx * (y + dims.ny * z)];
                if code == 0 {
                    return;
                }
                let delta = [
                    x as f64 - c.x as f64,
                    y as f64 - c.y as f64,
                    z as f64 - c.z as f64,
                ];
                let d = if code == 1 {
                    sq_norm(s, delta, [0.0; 3])
                } else {
                    let faces = code - 1;
                    N6.iter()
                        .enumerate()
                        .filter(|(k, _)| faces & (1 << k) != 0)
                        .map(|(_, dir)| {
                            sq_norm(
                                s,
                                delta,
                                [
                                    dir[0] as f64 * 0.5,
                                    dir[1] as f64 * 0.5,
                                    dir[2] as f64 * 0.5,
                                ],
                            )
                        })
                        .fold(f64::INFINITY, f64::min)
                };
                if best.len() < m || d < best[m - 1] {
                    let at = best.partition_point(|b| *b <= d);
                    best.insert(at, d);
                    best.truncate(m);
                }
            };
            for r in 0..=max_shell {
                for_each_in_shell(dims, c, r, |x, y, z| visit(x, y, z, &mut best));
                let bound = (r as f64 + 1.0 - slack) * s_min;
                if best.len() == m && best[m - 1] < bound * bound {
                    break;
                }
            }
            best.last().copied().unwrap_or(0.0).sqrt()
        })
        .collect();
    Ok(LocalRadiusMap {
        dims,
        indices: skel.indices().to_vec(),
        radii,
        m,
    })
}

#[inline]
fn sq_norm(s: [f64; 3], delta: [f64; 3], shift: [f64; 3]) -> f64 {
    let dx = s[0] * (delta[0] + shift[0]);
    let dy = s[1] * (delta[1] + shift[1]);
    let dz = s[2] * (delta[2] + shift[2]);
    dx * dx + dy * dy + dz * dz
}

/// Calls `f` for every in-grid voxel at Chebyshev distance exactly `r` from `c`.
fn for_each_in_shell(dims: Dims, c: VoxelCoord, r: usize, mut f: impl FnMut(usize, usize, usize)) {
    let r = r as isize;
    let (cx, cy, cz) = (c.x as isize, c.y as isize, c.z as isize);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1);
    let (z0, z1) = (clamp(cz - r, dims.nz), clamp(cz + r, dims.nz));
    let (y0, y1) = (clamp(cy - r, dims.ny), clamp(cy + r, dims.ny));
    let (x0, x1) = (clamp(cx - r, dims.nx), clamp(cx + r, dims.nx));
    for z in z0..=z1 {
        let z_edge = (z - cz).abs() == r;
        for y in y0..=y1 {
            if z_edge || (y - cy).abs() == r {
                for x in x0..=x1 {
                    f(x as usize, y as usize, z as usize);
                }
            } else {
                for x in [cx - r, cx + r] {
                    if x >= 0 && (x as usize) < dims.nx {
                        f(x as usize, y as usize, z as usize);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRow {
    pub branch_id: u32,
    pub radius_mm: f64,
    pub skeleton_voxels: usize,
    pub reconstructed_voxels: usize,
}

/// Per-branch radius and voxel counts, ids ascending from 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchTable {
    pub rows: Vec<BranchRow>,
}

impl BranchTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.radius_mm).collect()
    }

    pub fn get(&self, id: u32) -> Option<&BranchRow> {
        self.rows
            .binary_search_by_key(&id, |r| r.branch_id)
            .ok()
            .map(|k| &self.rows[k])
    }

    /// Fills `reconstructed_voxels` from a branch-label volume.
    pub fn count_reconstructed(&mut self, labels: &LabelVolume) {
        let mut counts: HashMap<u32, usize> = HashMap::new();
        for &l in labels.data() {
            if l != 0 {
                *counts.entry(l).or_default() += 1;
            }
        }
        for row in &mut self.rows {
            row.reconstructed_voxels = counts.get(&row.branch_id).copied().unwrap_or(0);
        }
    }

    /// CSV with header `branch_id,radius_mm,skeleton_voxels,reconstructed_voxels`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        if self.rows.is_empty() {
            wr.write_record([
                "branch_id",
                "radius_mm",
                "skeleton_voxels",
                "reconstructed_voxels",
            ])?;
        }
        wr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(out)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<BranchRow>, _>>()?;
        Ok(BranchTable { rows })
    }
}

/// Median of a non-empty slice; even counts average the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Branch radius = median local radius over the branch's skeleton voxels.
pub fn branch_radius(ls: &LabeledSkeleton, lr: &LocalRadiusMap) -> Result<BranchTable> {
    if ls.indices != lr.indices {
        return Err(Error::VoxelSetMismatch);
    }
    let mut per_branch: Vec<Vec<f64>> = vec![Vec::new(); ls.n_branches as usize];
    for (&l, &r) in ls.labels.iter().zip(&lr.radii) {
        per_branch[l as usize - 1].push(r);
    }
    let rows = per_branch
        .iter()
        .enumerate()
        .map(|(k, radii)| BranchRow {
            branch_id: k as u32 + 1,
            radius_mm: median(radii).unwrap_or(0.0),
            skeleton_voxels: radii.len(),
            reconstructed_voxels: 0,
        })
        .collect();
    Ok(BranchTable { rows })
}

/// Labels every foreground voxel with the branch of its nearest labeled
/// skeleton voxel. Ties go to the smaller branch id, then to the skeleton
/// voxel with the smaller linear index.
pub fn reconstruct_branches(
    mask: &MaskVolume,
    ls: &LabeledSkeleton,
    spacing: Spacing,
) -> Result<LabelVolume> {
    let dims = mask.dims();
    if dims != ls.dims {
        return Err(Error::DimsMismatch(dims.as_array(), ls.dims.as_array()));
    }
    for &i in &ls.indices {
        if !mask.data()[i] {
            let c = dims.coord(i);
            return Err(Error::SkeletonOutsideMask([c.x, c.y, c.z]));
        }
    }
    let mut order: Vec<(u32, usize)> = ls
        .labels
        .iter()
        .copied()
        .zip(ls.indices.iter().copied())
        .collect();
    order.sort_unstable();
    let seeds: Vec<usize> = order.iter().map(|&(_, i)| i).collect();
    let foreground = mask.foreground();
    let fm = feature_transform(dims, spacing, &seeds, &foreground);
    let mut out = Volume::filled(dims, mask.spacing(), 0u32);
    if seeds.is_empty() {
        return Ok(out);
    }
    for &i in &foreground {
        let f = fm
            .get(dims.coord(i))
            .expect("every foreground voxel lies in the transform window");
        out.data_mut()[i] = order[f.seed as usize].0;
    }
    Ok(out)
}
