//! Reference loss kernels with analytic gradients: soft Dice, weighted
//! cross-entropy, the supervised multi-scale contrastive loss and the
//! weighted total. No network code; inputs are plain arrays.
//!
//! Every reduction runs sequentially in a fixed order, so results do not
//! depend on the caller's threading.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, MaskVolume};

/// Smoothing constant of the soft Dice loss.
pub const DICE_EPSILON: f64 = 1e-6;
/// Probability clamp of the cross-entropy.
pub const CE_DELTA: f64 = 1e-7;
pub const DEFAULT_TAU: f64 = 0.94;
pub const DEFAULT_SCALE_WEIGHTS: [f64; 3] = [0.78, 0.48, 0.54];
pub const DEFAULT_CONTRASTIVE_WEIGHT: f64 = 0.53;

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidLossInput(msg.into())
}

/// Predicted foreground probabilities in voxel order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    dims: Dims,
    values: Vec<f64>,
}

impl ProbabilityField {
    pub fn new(dims: Dims, values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::DataLength {
                expected: dims.len(),
                found: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid(format!("probability {} at voxel {k}", values[k])));
        }
        Ok(ProbabilityField { dims, values })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A loss value and its gradient with respect to every input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn aligned(pred: &ProbabilityField, gt: &MaskVolume) -> Result<()> {
    if pred.dims != gt.dims() {
        return Err(Error::DimsMismatch(
            pred.dims.as_array(),
            gt.dims().as_array(),
        ));
    }
    Ok(())
}

/// `1 − (2·Σpg + ε)/(Σp + Σg + ε)`.
pub fn soft_dice_loss(pred: &ProbabilityField, gt: &MaskVolume) -> Result<LossGrad> {
    aligned(pred, gt)?;
    Ok(soft_dice_raw(&pred.values, gt.data(), DICE_EPSILON))
}

fn soft_dice_raw(p: &[f64], g: &[bool], eps: f64) -> LossGrad {
    let (mut inter, mut sp, mut sg) = (0.0, 0.0, 0.0);
    for (&pi, &gi) in p.iter().zip(g) {
        let gi = gi as u8 as f64;
        inter += pi * gi;
        sp += pi;
        sg += gi;
    }
    let num = 2.0 * inter + eps;
    let den = sp + sg + eps;
    let grad = g
        .iter()
        .map(|&gi| -(2.0 * (gi as u8 as f64) * den - num) / (den * den))
        .collect();
    LossGrad {
        value: 1.0 - num / den,
        grad,
    }
}

/// Cross-entropy class weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub background: f64,
    pub foreground: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            background: 1.0,
            foreground: 1.0,
        }
    }

    /// Inverse class frequency `V/n_c`; a class absent from `gt` gets 1.
    pub fn inverse_frequency(gt: &MaskVolume) -> Self {
        let v = gt.data().len() as f64;
        let fg = gt.count();
        let bg = gt.data().len() - fg;
        let w = |n: usize| if n == 0 { 1.0 } else { v / n as f64 };
        ClassWeights {
            background: w(bg),
            foreground: w(fg),
        }
    }
}

/// `−mean(w₁·g·log p + w₀·(1−g)·log(1−p))` with `p` clamped to
/// `[δ, 1−δ]`. The gradient is zero where the clamp is active.
pub fn weighted_cross_entropy(
    pred: &ProbabilityField,
    gt: &MaskVolume,
    w: ClassWeights,
) -> Result<LossGrad> {
    aligned(pred, gt)?;
    if !(w.background >= 0.0 && w.foreground >= 0.0) {
        return Err(invalid("class weights must be >= 0"));
    }
    let n = pred.values.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.values.len());
    for (&p, &g) in pred.values.iter().zip(gt.data()) {
        let q = p.clamp(CE_DELTA, 1.0 - CE_DELTA);
        let clamped = q != p;
        if g {
            value -= w.foreground * q.ln();
            grad.push(if clamped {
                0.0
            } else {
                -w.foreground / (q * n)
            });
        } else {
            value -= w.background * (1.0 - q).ln();
            grad.push(if clamped {
                0.0
            } else {
                w.background / ((1.0 - q) * n)
            });
        }
    }
    Ok(LossGrad {
        value: value / n,
        grad,
    })
}

/// Unweighted sum of soft Dice and weighted cross-entropy, with the
/// smoothing constant and class weights taken from `cfg`.
pub fn segmentation_loss(
    pred: &ProbabilityField,
    gt: &MaskVolume,
    cfg: &LossConfig,
) -> Result<LossGrad> {
    aligned(pred, gt)?;
    if cfg.dice_epsilon.is_nan() || cfg.dice_epsilon <= 0.0 {
        return Err(invalid("Dice smoothing must be > 0"));
    }
    let d = soft_dice_raw(&pred.values, gt.data(), cfg.dice_epsilon);
    let w = cfg
        .class_weights
        .unwrap_or_else(|| ClassWeights::inverse_frequency(gt));
    let c = weighted_cross_entropy(pred, gt, w)?;
    Ok(LossGrad {
        value: d.value + c.value,
        grad: d.grad.iter().zip(&c.grad).map(|(a, b)| a + b).collect(),
    })
}

/// Embeddings with their scale labels, as read by the `loss` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBatch {
    #[serde(default = "default_tau")]
    pub tau: f64,
    pub vectors: Vec<Vec<f64>>,
    pub scales: Vec<u32>,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl EmbeddingBatch {
    fn validate(&self) -> Result<usize> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(invalid(format!(
                "temperature must be > 0, got {}",
                self.tau
            )));
        }
        let n = self.vectors.len();
        if n < 2 {
            return Err(invalid("at least two vectors are required"));
        }
        if self.scales.len() != n {
            return Err(invalid(format!(
                "{n} vectors but {} scale labels",
                self.scales.len()
            )));
        }
        if self.scales.contains(&0) {
            return Err(invalid("scale labels start at 1"));
        }
        let d = self.vectors[0].len();
        if d == 0 {
            return Err(invalid("vectors must have at least one component"));
        }
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != d {
                return Err(invalid(format!(
                    "vector {i} has length {}, expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                return Err(invalid(format!("vector {i} must be finite and non-zero")));
            }
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContrastiveLoss {
    pub loss: f64,
    /// Mean of `l_{i,j}` over the positives of each anchor; `None` for
    /// anchors without positives.
    pub per_anchor: Vec<Option<f64>>,
    pub skipped_anchors: Vec<usize>,
    /// Gradient with respect to the raw (unnormalized) vectors.
    #[serde(skip)]
    pub grad: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Supervised contrastive loss over scale labels. Rows are L2-normalized;
/// for anchor `i`, positives are the other rows of its scale and negatives
/// the rows of every other scale. Each term is
/// `−log(e^{s_ij} / (e^{s_ij} + Σ_k e^{s_ik}))` with `s = zᵢ·zⱼ/τ`,
/// averaged over positives and then over anchors that have any.
pub fn contrastive_loss(batch: &EmbeddingBatch) -> Result<ContrastiveLoss> {
    let d = batch.validate()?;
    let n = batch.vectors.len();
    let tau = batch.tau;
    let norms: Vec<f64> = batch.vectors.iter().map(|v| dot(v, v).sqrt()).collect();
    let z: Vec<Vec<f64>> = batch
        .vectors
        .iter()
        .zip(&norms)
        .map(|(v, &r)| v.iter().map(|x| x / r).collect())
        .collect();
    let s: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&z[i], &z[j]) / tau).collect())
        .collect();

    let anchors: Vec<(usize, Vec<usize>, Vec<usize>)> = (0..n)
        .map(|i| {
            let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n)
                .filter(|&j| j != i)
                .partition(|&j| batch.scales[j] == batch.scales[i]);
            (i, pos, neg)
        })
        .collect();
    let active = anchors.iter().filter(|a| !a.1.is_empty()).count();
    if active == 0 {
        return Err(invalid("no anchor has a positive of the same scale"));
    }

    // gradient with respect to s, then chain through z and the normalization
    let mut gs = vec![vec![0.0; n]; n];
    let mut per_anchor = vec![None; n];
    let mut skipped = Vec::new();
    let mut total = 0.0;
    for (i, pos, neg) in &anchors {
        let i = *i;
        if pos.is_empty() {
            skipped.push(i);
            continue;
        }
        let w = 1.0 / (active as f64 * pos.len() as f64);
        let row = &s[i];
        let mut sum = 0.0;
        for &j in pos {
            // log-sum-exp over {j} ∪ N_i shifted by the largest logit
            let m = neg.iter().map(|&k| row[k]).fold(row[j], f64::max);
            let ej = (row[j] - m).exp();
            let en: Vec<f64> = neg.iter().map(|&k| (row[k] - m).exp()).collect();
            let den = ej + en.iter().sum::<f64>();
            sum += den.ln() + m - row[j];
            gs[i][j] += w * (ej / den - 1.0);
            for (&k, e) in neg.iter().zip(&en) {
                gs[i][k] += w * e / den;
            }
        }
        let term = sum / pos.len() as f64;
        per_anchor[i] = Some(term);
        total += term;
    }

    let mut gz = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..n {
            let g = gs[i][j] / tau;
            if g == 0.0 {
                continue;
            }
            for c in 0..d {
                gz[i][c] += g * z[j][c];
                gz[j][c] += g * z[i][c];
            }
        }
    }
    let grad = (0..n)
        .map(|i| {
            let p = dot(&z[i], &gz[i]);
            (0..d)
                .map(|c| (gz[i][c] - p * z[i][c]) / norms[i])
                .collect()
        })
        .collect();

    Ok(ContrastiveLoss {
        loss: total / active as f64,
        per_anchor,
        skipped_anchors: skipped,
        grad,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// One weight per auxiliary scale task.
    pub scale_weights: Vec<f64>,
    pub contrastive_weight: f64,
    /// `None` means inverse-frequency weights from the ground truth.
    pub class_weights: Option<ClassWeights>,
    pub dice_epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            scale_weights: DEFAULT_SCALE_WEIGHTS.to_vec(),
            contrastive_weight: DEFAULT_CONTRASTIVE_WEIGHT,
            class_weights: None,
            dice_epsilon: DICE_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub l_mt: f64,
    pub l_s: Vec<f64>,
    pub l_c: f64,
    pub total: f64,
}

/// `l_mt + Σ λ_s·l_s + λ_c·l_c`.
pub fn total_loss(l_mt: f64, l_s: &[f64], l_c: f64, cfg: &LossConfig) -> Result<LossBreakdown> {
    if l_s.len() != cfg.scale_weights.len() {
        return Err(invalid(format!(
            "{} scale losses for {} scale weights",
            l_s.len(),
            cfg.scale_weights.len()
        )));
    }
    let negative = |w: f64| w.is_nan() || w < 0.0;
    if cfg.scale_weights.iter().any(|&w| negative(w)) || negative(cfg.contrastive_weight) {
        return Err(invalid("loss weights must be >= 0"));
    }
    let scales: f64 = cfg.scale_weights.iter().zip(l_s).map(|(w, l)| w * l).sum();
    Ok(LossBreakdown {
        l_mt,
        l_s: l_s.to_vec(),
        l_c,
        total: l_mt + scales + cfg.contrastive_weight * l_c,
    })
}

/// Largest relative error between the analytic gradient returned by `f`
/// and central differences with the given step. The relative error of one
/// coordinate is `|a − n| / max(|a|, |n|, 1e-6)`.
///
/// # Panics
/// If `step` is not positive.
pub fn finite_difference_check<F>(f: F, point: &[f64], step: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    assert!(step > 0.0, "step must be > 0");
    let (_, analytic) = f(point);
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for k in 0..point.len() {
        x[k] = point[k] + step;
        let up = f(&x).0;
        x[k] = point[k] - step;
        let down = f(&x).0;
        x[k] = point[k];
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[k];
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}
