//! End-to-end multi-scale decomposition of a binary vessel mask.

use serde::Serialize;

use crate::branches::{
    branch_radius, label_branches, local_radius_with, prune_spurs, reconstruct_branches,
    BranchTable, LabeledSkeleton, LocalRadiusMap, RadiusMetric, DEFAULT_NEIGHBOURS,
    DEFAULT_PRUNE_FACTOR,
};
use crate::error::Result;
use crate::scales::{assign_scales, compute_thresholds, ScaleDecomposition, DEFAULT_SCALES};
use crate::skeleton::{extract_surface, skeletonize, Skeleton, SurfaceSet};
use crate::volume::{LabelVolume, MaskVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecomposeParams {
    /// Nearest surface voxels per local radius.
    pub m: usize,
    /// Number of scale masks.
    pub scales: usize,
    /// Spur-pruning factor; 0 disables pruning.
    pub prune_factor: f64,
    pub radius_metric: RadiusMetric,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        DecomposeParams {
            m: DEFAULT_NEIGHBOURS,
            scales: DEFAULT_SCALES,
            prune_factor: DEFAULT_PRUNE_FACTOR,
            radius_metric: RadiusMetric::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub surface: SurfaceSet,
    /// Thinning output before spur pruning.
    pub raw_skeleton: Skeleton,
    pub skeleton: Skeleton,
    pub labeled: LabeledSkeleton,
    pub local_radii: LocalRadiusMap,
    pub table: BranchTable,
    pub branch_labels: LabelVolume,
    pub scales: ScaleDecomposition,
}

/// Runs surface extraction, thinning, local radius estimation, spur
/// pruning, branch labeling, branch radii, branch reconstruction and scale
/// assignment. Distances use the mask's spacing.
pub fn decompose(mask: &MaskVolume, params: DecomposeParams) -> Result<Decomposition> {
    let spacing = mask.spacing();
    let surface = extract_surface(mask);
    let raw_skeleton = skeletonize(mask);
    if raw_skeleton.is_empty() {
        return Err(crate::Error::EmptySkeleton);
    }
    let raw_radii = local_radius_with(
        &raw_skeleton,
        &surface,
        spacing,
        params.m,
        params.radius_metric,
    )?;
    let skeleton = prune_spurs(&raw_skeleton, &raw_radii, params.prune_factor)?;
    let local_radii = raw_radii.restrict(&skeleton);
    let labeled = label_branches(&skeleton)?;
    let mut table = branch_radius(&labeled, &local_radii)?;
    let branch_labels = reconstruct_branches(mask, &labeled, spacing)?;
    table.count_reconstructed(&branch_labels);
    let thresholds = compute_thresholds(&table.radii(), params.scales)?;
    let scales = assign_scales(&branch_labels, &table, &thresholds)?;
    Ok(Decomposition {
        surface,
        raw_skeleton,
        skeleton,
        labeled,
        local_radii,
        table,
        branch_labels,
        scales,
    })
}
