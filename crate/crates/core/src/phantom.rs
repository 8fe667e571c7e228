//! Synthetic tubular phantoms with exact ground truth.
//!
//! Each segment is rasterized as a capsule: a voxel is foreground when its
//! center lies within `radius_mm` of the segment axis. Voxel `(i, j, k)` has
//! its center at `(i·sx, j·sy, k·sz)` mm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::branches::{BranchRow, BranchTable};
use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, MaskVolume, Spacing, Volume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius_mm: f64,
    pub id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone)]
pub struct Phantom {
    pub mask: MaskVolume,
    pub labels: LabelVolume,
    /// Declared radius per branch id; `skeleton_voxels` is zero.
    pub table: BranchTable,
}

impl PhantomSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    fn validate(&self) -> Result<(Dims, Spacing, BTreeMap<u32, f64>)> {
        let dims = Dims::new(self.dims[0], self.dims[1], self.dims[2])?;
        let s = self.spacing_mm;
        let spacing = Spacing::new(s[0], s[1], s[2])?;
        if self.segments.is_empty() {
            return Err(Error::InvalidPhantom("no segments".into()));
        }
        let extent = [
            (dims.nx - 1) as f64 * s[0],
            (dims.ny - 1) as f64 * s[1],
            (dims.nz - 1) as f64 * s[2],
        ];
        let mut radii = BTreeMap::new();
        for (k, seg) in self.segments.iter().enumerate() {
            if !(seg.radius_mm.is_finite() && seg.radius_mm > 0.0) {
                return Err(Error::InvalidPhantom(format!(
                    "segment {k}: radius must be > 0"
                )));
            }
            for p in [seg.start, seg.end] {
                if (0..3).any(|a| !(p[a].is_finite() && p[a] >= 0.0 && p[a] <= extent[a])) {
                    return Err(Error::InvalidPhantom(format!(
                        "segment {k}: endpoint {p:?} outside the volume extent {extent:?}"
                    )));
                }
            }
            match radii.insert(seg.id, seg.radius_mm) {
                Some(r) if r != seg.radius_mm => {
                    return Err(Error::InvalidPhantom(format!(
                        "branch {} declared with radii {r} and {}",
                        seg.id, seg.radius_mm
                    )))
                }
                _ => {}
            }
        }
        if radii.keys().copied().ne(1..=radii.len() as u32) {
            return Err(Error::InvalidPhantom(
                "branch ids must be contiguous from 1".into(),
            ));
        }
        Ok((dims, spacing, radii))
    }

    pub fn generate(&self) -> Result<Phantom> {
        generate_tree(self)
    }
}

/// Distance from `p` to the segment `a`–`b`.
pub fn point_segment_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1], ap[2] - t * ab[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Rasterizes the phantom and returns the mask, ground-truth branch labels
/// (nearest containing segment, ties to the lower id) and declared radii.
pub fn generate_tree(spec: &PhantomSpec) -> Result<Phantom> {
    let (dims, spacing, radii) = spec.validate()?;
    let s = spacing.0;
    let mut best = vec![(f64::INFINITY, 0u32); dims.len()];
    for seg in &spec.segments {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let n = dims.as_array();
        for a in 0..3 {
            let min = seg.start[a].min(seg.end[a]) - seg.radius_mm;
            let max = seg.start[a].max(seg.end[a]) + seg.radius_mm;
            lo[a] = (min / s[a]).floor().max(0.0) as usize;
            hi[a] = ((max / s[a]).ceil().max(0.0) as usize).min(n[a] - 1);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let p = [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]];
                    let d = point_segment_distance(p, seg.start, seg.end);
                    if d > seg.radius_mm {
                        continue;
                    }
                    let slot = &mut best[x + dims.nx * (y + dims.ny * z)];
                    if d < slot.0 || (d == slot.0 && seg.id < slot.1) {
                        *slot = (d, seg.id);
                    }
                }
            }
        }
    }
    let labels: Vec<u32> = best.iter().map(|b| b.1).collect();
    if labels.iter().all(|&l| l == 0) {
        return Err(Error::InvalidPhantom("rasterized mask is empty".into()));
    }
    let labels = Volume::from_vec(dims, spacing, labels)?;
    let mask = labels.map(|&l| l != 0);
    let mut table = BranchTable {
        rows: radii
            .iter()
            .map(|(&id, &r)| BranchRow {
                branch_id: id,
                radius_mm: r,
                skeleton_voxels: 0,
                reconstructed_voxels: 0,
            })
            .collect(),
    };
    table.count_reconstructed(&labels);
    Ok(Phantom {
        mask,
        labels,
        table,
    })
}
