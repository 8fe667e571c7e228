//! Per-volume scale thresholds and scale masks.

use std::collections::HashMap;

use serde::Serialize;

use crate::branches::BranchTable;
use crate::error::{Error, Result};
use crate::volume::{LabelVolume, MaskVolume};

/// Default number of scales (small, medium, large).
pub const DEFAULT_SCALES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// First and third quartiles (three scales).
    Quartiles,
    /// Quantiles at k/S, k = 1..S−1.
    EvenQuantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleThresholds {
    pub values: Vec<f64>,
    pub scales: usize,
    pub estimator: Estimator,
}

impl ScaleThresholds {
    /// Scale index (1-based) for a branch radius: one plus the number of
    /// thresholds strictly below it.
    pub fn scale_of(&self, radius: f64) -> usize {
        1 + self.values.iter().filter(|&&t| t < radius).count()
    }
}

/// Quantile with linear interpolation between order statistics at
/// `h = (n − 1)·p`. `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn compute_thresholds(radii: &[f64], scales: usize) -> Result<ScaleThresholds> {
    if radii.is_empty() {
        return Err(Error::EmptyRadii);
    }
    if scales < 2 {
        return Err(Error::InvalidScaleCount(scales));
    }
    let v = sorted(radii);
    let (values, estimator) = if scales == 3 {
        (
            vec![quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75)],
            Estimator::Quartiles,
        )
    } else {
        (
            (1..scales)
                .map(|k| quantile_sorted(&v, k as f64 / scales as f64))
                .collect(),
            Estimator::EvenQuantiles,
        )
    };
    Ok(ScaleThresholds {
        values,
        scales,
        estimator,
    })
}

#[derive(Debug, Clone)]
pub struct ScaleDecomposition {
    /// `masks[0]` holds the smallest radii.
    pub masks: Vec<MaskVolume>,
    pub thresholds: ScaleThresholds,
    /// Scale index of each branch, by branch id.
    pub branch_scales: Vec<(u32, usize)>,
}

pub fn assign_scales(
    branch_labels: &LabelVolume,
    table: &BranchTable,
    thresholds: &ScaleThresholds,
) -> Result<ScaleDecomposition> {
    if thresholds.scales < 2 {
        return Err(Error::InvalidScaleCount(thresholds.scales));
    }
    let scale_of: HashMap<u32, usize> = table
        .rows
        .iter()
        .map(|r| (r.branch_id, thresholds.scale_of(r.radius_mm)))
        .collect();
    let dims = branch_labels.dims();
    let spacing = branch_labels.spacing();
    let mut masks = vec![MaskVolume::empty(dims, spacing); thresholds.scales];
    for (i, &l) in branch_labels.data().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let s = *scale_of.get(&l).ok_or(Error::MissingBranch(l))?;
        masks[s - 1].data_mut()[i] = true;
    }
    let mut branch_scales: Vec<(u32, usize)> = scale_of.into_iter().collect();
    branch_scales.sort_unstable();
    Ok(ScaleDecomposition {
        masks,
        thresholds: thresholds.clone(),
        branch_scales,
    })
}

/// Summary of the branch radii of one volume.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusStats {
    pub n_b: usize,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

pub fn radius_statistics(table: &BranchTable) -> RadiusStats {
    let v = sorted(&table.radii());
    if v.is_empty() {
        return RadiusStats {
            n_b: 0,
            min: None,
            q1: None,
            median: None,
            q3: None,
            max: None,
        };
    }
    RadiusStats {
        n_b: v.len(),
        min: Some(v[0]),
        q1: Some(quantile_sorted(&v, 0.25)),
        median: Some(quantile_sorted(&v, 0.5)),
        q3: Some(quantile_sorted(&v, 0.75)),
        max: Some(v[v.len() - 1]),
    }
}
