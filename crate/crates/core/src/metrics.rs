//! Overlap, connectivity and distance metrics between two binary masks.
//!
//! Empty-mask conventions: Dice, Jaccard and clDice of two empty masks are
//! 1; clDice is 0 when exactly one skeleton is empty. The Hausdorff
//! distance of two empty masks is 0 and becomes infinite when exactly one
//! is empty.

use serde::{Serialize, Serializer};

use crate::edt::feature_transform;
use crate::error::{Error, Result};
use crate::skeleton::skeletonize;
use crate::volume::MaskVolume;

fn check_dims(a: &MaskVolume, b: &MaskVolume) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimsMismatch(
            a.dims().as_array(),
            b.dims().as_array(),
        ));
    }
    Ok(())
}

/// `(|A|, |B|, |A ∩ B|)`.
fn counts(a: &MaskVolume, b: &MaskVolume) -> (usize, usize, usize) {
    a.data()
        .iter()
        .zip(b.data())
        .fold((0, 0, 0), |(na, nb, ni), (&x, &y)| {
            (na + x as usize, nb + y as usize, ni + (x && y) as usize)
        })
}

pub fn dice(gt: &MaskVolume, pred: &MaskVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let (a, b, i) = counts(gt, pred);
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * i as f64 / (a + b) as f64)
}

pub fn jaccard(gt: &MaskVolume, pred: &MaskVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let (a, b, i) = counts(gt, pred);
    let union = a + b - i;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(i as f64 / union as f64)
}

/// Fraction of the skeleton voxels of `skel_of` that lie inside `other`.
fn skeleton_fraction(skel_of: &MaskVolume, other: &MaskVolume) -> Option<f64> {
    let s = skeletonize(skel_of);
    if s.is_empty() {
        return None;
    }
    let hit = s.indices().iter().filter(|&&i| other.data()[i]).count();
    Some(hit as f64 / s.len() as f64)
}

/// Harmonic mean of topology precision (prediction skeleton inside the
/// ground truth) and topology sensitivity (ground-truth skeleton inside the
/// prediction). Skeletons come from [`skeletonize`].
pub fn cl_dice(gt: &MaskVolume, pred: &MaskVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    let (a, b, _) = counts(gt, pred);
    if a + b == 0 {
        return Ok(1.0);
    }
    let (Some(tprec), Some(tsens)) = (skeleton_fraction(pred, gt), skeleton_fraction(gt, pred))
    else {
        return Ok(0.0);
    };
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}

/// Largest distance from a voxel of `from` to the nearest voxel of `to`.
fn directed_sq(from: &[usize], to: &[usize], gt: &MaskVolume) -> f64 {
    let map = feature_transform(gt.dims(), gt.spacing(), to, from);
    from.iter()
        .map(|&i| {
            map.get(gt.dims().coord(i))
                .map_or(f64::INFINITY, |f| f.sq_dist)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the foreground voxel centers, in
/// mm, using the masks' spacing. Exact: distances come from an exact
/// feature transform of each mask sampled at the other's voxels.
pub fn hausdorff(gt: &MaskVolume, pred: &MaskVolume) -> Result<f64> {
    check_dims(gt, pred)?;
    if gt.spacing() != pred.spacing() {
        return Err(Error::SpacingMismatch(gt.spacing().0, pred.spacing().0));
    }
    let a = gt.foreground();
    let b = pred.foreground();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(f64::INFINITY),
        _ => {}
    }
    let sq = directed_sq(&a, &b, gt).max(directed_sq(&b, &a, gt));
    Ok(sq.sqrt())
}

/// All four metrics for one pair. An infinite `hd_mm` serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    pub dsc: f64,
    pub jacc: f64,
    pub cldsc: f64,
    #[serde(serialize_with = "finite_or_null")]
    pub hd_mm: f64,
}

fn finite_or_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

pub fn evaluate(gt: &MaskVolume, pred: &MaskVolume) -> Result<MetricsReport> {
    Ok(MetricsReport {
        dsc: dice(gt, pred)?,
        jacc: jaccard(gt, pred)?,
        cldsc: cl_dice(gt, pred)?,
        hd_mm: hausdorff(gt, pred)?,
    })
}
