//! Classification and regression losses with analytic gradients.
//!
//! All classification losses take raw logits and evaluate the sigmoid and its
//! logarithms in overflow-free form. Every function returns the scalar loss
//! together with the gradient with respect to its first argument.
//!
//! Classification losses are normalized by the number of POSITIVE cells in the
//! targets (at least 1), regardless of variant, so the variants differ only in
//! which cells they sum over.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::assignment::{InstanceActionTargets, Label, RegionAssignment, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// Foreground anchors only, non-dominant verbs ignored.
    Ignorance,
    /// Vanilla focal loss over every anchor; ignored cells count as negatives.
    Focal,
    /// Foreground anchors only, every overlapping verb positive.
    Foreground,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [LossVariant::Ignorance, LossVariant::Focal, LossVariant::Foreground];

    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::Ignorance => "ignorance",
            LossVariant::Focal => "focal",
            LossVariant::Foreground => "foreground",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub smooth_l1_beta: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            gamma: 2.0,
            smooth_l1_beta: 0.1,
            variant: LossVariant::Ignorance,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.smooth_l1_beta > 0.0 && self.smooth_l1_beta.is_finite()) {
            return Err(Error::Config(format!(
                "smooth_l1_beta must be positive, got {}",
                self.smooth_l1_beta
            )));
        }
        Ok(())
    }
}

/// Per-anchor, per-class labels plus a foreground flag per anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTargets {
    pub labels: Array2<Label>,
    pub foreground: Vec<bool>,
}

impl ClassTargets {
    pub fn new(labels: Array2<Label>, foreground: Vec<bool>) -> Result<Self> {
        if labels.nrows() != foreground.len() {
            return Err(Error::Contract(format!(
                "{} label rows but {} foreground flags",
                labels.nrows(),
                foreground.len()
            )));
        }
        for (row, &fg) in labels.rows().into_iter().zip(&foreground) {
            if !fg && row.iter().any(|&l| l != Label::Negative) {
                return Err(Error::Contract("background anchors must be all-negative".into()));
            }
        }
        Ok(Self { labels, foreground })
    }

    pub fn from_assignments(assignments: &[RegionAssignment], num_classes: usize) -> Result<Self> {
        let mut labels = Array2::from_elem((assignments.len(), num_classes), Label::Negative);
        for (i, a) in assignments.iter().enumerate() {
            if a.class_targets.len() != num_classes {
                return Err(Error::Contract(format!(
                    "anchor {} has {} class targets, expected {num_classes}",
                    a.anchor_index,
                    a.class_targets.len()
                )));
            }
            for (c, &l) in a.class_targets.iter().enumerate() {
                labels[[i, c]] = l;
            }
        }
        Self::new(labels, assignments.iter().map(|a| a.is_foreground()).collect())
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Positive).count()
    }
}

/// Scalar loss and its gradient with respect to the input matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Focal term of one cell and its derivative with respect to the logit.
///
/// Positive: `-α (1-p)^γ ln p`. Negative: `-(1-α) p^γ ln(1-p)`, with `p = σ(logit)`.
pub fn focal_term(logit: f64, positive: bool, cfg: &LossConfig) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(Error::Numeric(format!("non-finite logit {logit}")));
    }
    let (alpha, gamma) = (cfg.alpha, cfg.gamma);
    let p = sigmoid(logit);
    let q = sigmoid(-logit);
    if positive {
        let log_p = -softplus(-logit);
        let w = q.powf(gamma);
        let loss = -alpha * w * log_p;
        let grad = alpha * w * (gamma * p * log_p - q);
        Ok((loss, grad))
    } else {
        let log_q = -softplus(logit);
        let w = p.powf(gamma);
        let loss = -(1.0 - alpha) * w * log_q;
        let grad = (1.0 - alpha) * w * (p - gamma * q * log_q);
        Ok((loss, grad))
    }
}

#[derive(Clone, Copy)]
enum CellRule {
    Skip,
    Positive,
    Negative,
}

fn check_shapes(logits: &ArrayView2<'_, f64>, targets: &ClassTargets) -> Result<()> {
    if logits.dim() != targets.labels.dim() {
        return Err(Error::Contract(format!(
            "logits have shape {:?} but targets {:?}",
            logits.dim(),
            targets.labels.dim()
        )));
    }
    Ok(())
}

fn masked_focal(
    logits: ArrayView2<'_, f64>,
    targets: &ClassTargets,
    cfg: &LossConfig,
    rule: impl Fn(bool, Label) -> CellRule,
) -> Result<LossGrad> {
    check_shapes(&logits, targets)?;
    let norm = targets.positive_count().max(1) as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut value = 0.0;
    for ((i, c), &x) in logits.indexed_iter() {
        let positive = match rule(targets.foreground[i], targets.labels[[i, c]]) {
            CellRule::Skip => continue,
            CellRule::Positive => true,
            CellRule::Negative => false,
        };
        let (l, g) = focal_term(x, positive, cfg)?;
        value += l;
        grad[[i, c]] = g / norm;
    }
    Ok(LossGrad {
        value: value / norm,
        grad,
    })
}

/// Focal loss over foreground anchors only, skipping IGNORED cells.
///
/// Background anchors and ignored cells contribute exactly zero to both the
/// value and the gradient.
pub fn ignorance_loss(logits: ArrayView2<'_, f64>, targets: &ClassTargets, cfg: &LossConfig) -> Result<LossGrad> {
    masked_focal(logits, targets, cfg, |fg, label| match (fg, label) {
        (false, _) | (true, Label::Ignored) => CellRule::Skip,
        (true, Label::Positive) => CellRule::Positive,
        (true, Label::Negative) => CellRule::Negative,
    })
}

/// Focal loss over every anchor; IGNORED cells are negatives.
pub fn focal_loss_all(logits: ArrayView2<'_, f64>, targets: &ClassTargets, cfg: &LossConfig) -> Result<LossGrad> {
    masked_focal(logits, targets, cfg, |_, label| match label {
        Label::Positive => CellRule::Positive,
        Label::Negative | Label::Ignored => CellRule::Negative,
    })
}

/// Focal loss over foreground anchors; IGNORED cells are positives.
pub fn foreground_loss(logits: ArrayView2<'_, f64>, targets: &ClassTargets, cfg: &LossConfig) -> Result<LossGrad> {
    masked_focal(logits, targets, cfg, |fg, label| match (fg, label) {
        (false, _) => CellRule::Skip,
        (true, Label::Positive | Label::Ignored) => CellRule::Positive,
        (true, Label::Negative) => CellRule::Negative,
    })
}

/// Dispatches on `cfg.variant`.
pub fn classification_loss(logits: ArrayView2<'_, f64>, targets: &ClassTargets, cfg: &LossConfig) -> Result<LossGrad> {
    match cfg.variant {
        LossVariant::Ignorance => ignorance_loss(logits, targets, cfg),
        LossVariant::Focal => focal_loss_all(logits, targets, cfg),
        LossVariant::Foreground => foreground_loss(logits, targets, cfg),
    }
}

/// Smooth-L1 over `(anchors, 4)` delta matrices, summed over coordinates and
/// divided by the number of rows (at least 1).
pub fn smooth_l1(pred: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>, beta: f64) -> Result<LossGrad> {
    if pred.dim() != target.dim() {
        return Err(Error::Contract(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let norm = pred.nrows().max(1) as f64;
    let mut grad = Array2::zeros(pred.dim());
    let mut value = 0.0;
    for ((idx, &p), &t) in pred.indexed_iter().zip(target.iter()) {
        let d = p - t;
        let (l, g) = if d.abs() < beta {
            (0.5 * d * d / beta, d / beta)
        } else {
            (d.abs() - 0.5 * beta, d.signum())
        };
        value += l;
        grad[idx] = g / norm;
    }
    Ok(LossGrad {
        value: value / norm,
        grad,
    })
}

/// Mean multi-label binary cross-entropy over the participating cells.
///
/// Row `i` of `logits` belongs to `targets[i]`. Anchors with role NONE take no
/// part; an OBJECT-role row only uses its first `action_targets.len()` columns.
pub fn instance_action_bce(logits: ArrayView2<'_, f64>, targets: &[InstanceActionTargets]) -> Result<LossGrad> {
    if logits.nrows() != targets.len() {
        return Err(Error::Contract(format!(
            "{} logit rows but {} target records",
            logits.nrows(),
            targets.len()
        )));
    }
    let mut grad = Array2::zeros(logits.dim());
    let mut cells = 0usize;
    let mut value = 0.0;
    for (i, t) in targets.iter().enumerate() {
        if t.role == Role::None {
            continue;
        }
        if t.action_targets.len() > logits.ncols() {
            return Err(Error::Contract(format!(
                "anchor {} has {} action targets but only {} logit columns",
                t.anchor_index,
                t.action_targets.len(),
                logits.ncols()
            )));
        }
        for (c, &on) in t.action_targets.iter().enumerate() {
            let x = logits[[i, c]];
            if !x.is_finite() {
                return Err(Error::Numeric(format!("non-finite logit {x}")));
            }
            let y = if on { 1.0 } else { 0.0 };
            value += softplus(x) - y * x;
            grad[[i, c]] = sigmoid(x) - y;
            cells += 1;
        }
    }
    if cells == 0 {
        return Ok(LossGrad { value: 0.0, grad });
    }
    let norm = cells as f64;
    grad.mapv_inplace(|g| g / norm);
    Ok(LossGrad {
        value: value / norm,
        grad,
    })
}

/// The four component losses of one batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub reg_human: f64,
    pub reg_object: f64,
    pub cls_interaction: f64,
    pub cls_instance: f64,
}

/// Unweighted sum of the four parts.
pub fn total_loss(parts: &LossParts) -> f64 {
    parts.reg_human + parts.reg_object + parts.cls_interaction + parts.cls_instance
}
