//! Role mAP: greedy triplet matching and all-points average precision.

use serde::{Deserialize, Serialize};

use crate::assignment::{Categories, GtScene};
use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::voting::{InstanceDetection, TripletScore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApStyle {
    /// Area under the monotone precision envelope at every recall step.
    Continuous,
}

/// How no-object verbs are matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoObjectRule {
    /// Only the human box has to match.
    HumanOnly,
    /// The prediction must also carry no object.
    RequireEmptyObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub ap_style: ApStyle,
    pub no_object_rule: NoObjectRule,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            ap_style: ApStyle::Continuous,
            no_object_rule: NoObjectRule::HumanOnly,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}

/// Ground truth, detections and predicted triplets of one image.
#[derive(Debug, Clone, Copy)]
pub struct EvalScene<'a> {
    pub gt: &'a GtScene,
    pub detections: &'a [InstanceDetection],
    pub triplets: &'a [TripletScore],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerbAP {
    pub verb_id: usize,
    /// `None` when the verb has no ground truth.
    pub ap: Option<f64>,
    pub tp_count: usize,
    pub fp_count: usize,
    pub gt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_verb: Vec<VerbAP>,
    pub map_role: f64,
}

/// TP/FP decision for one prediction, in descending-score order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matched {
    pub scene: usize,
    pub score: f64,
    pub tp: bool,
}

fn check_refs(scene: &EvalScene<'_>) -> Result<()> {
    let n = scene.detections.len();
    for t in scene.triplets {
        if t.human_det >= n || t.object_det.is_some_and(|o| o >= n) {
            return Err(Error::Input(format!(
                "scene {}: triplet references detection {}/{:?} but only {n} detections exist",
                scene.gt.scene_id, t.human_det, t.object_det
            )));
        }
    }
    Ok(())
}

/// Greedy matching of all predictions of `verb` across scenes.
///
/// Predictions are visited by descending score (ties keep scene order, then
/// file order). A prediction is a true positive when both boxes overlap an
/// unclaimed ground-truth interaction of the same verb by strictly more than
/// the IoU threshold. Among several candidates the one with the highest
/// `min(IoU_h, IoU_o)` is claimed.
pub fn match_triplets(scenes: &[EvalScene<'_>], verb: usize, cats: &Categories, cfg: &EvalConfig) -> Result<Vec<Matched>> {
    let mut preds: Vec<(usize, &TripletScore)> = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        check_refs(scene)?;
        preds.extend(scene.triplets.iter().filter(|t| t.verb_id == verb).map(|t| (s, t)));
    }
    preds.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let mut claimed: Vec<Vec<bool>> = scenes.iter().map(|s| vec![false; s.gt.interactions.len()]).collect();
    let no_object = cats.is_no_object(verb);
    let mut out = Vec::with_capacity(preds.len());
    for (s, t) in preds {
        let scene = &scenes[s];
        let hbox = &scene.detections[t.human_det].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (g, gi) in scene.gt.interactions.iter().enumerate() {
            if gi.verb_id != verb || claimed[s][g] {
                continue;
            }
            let ov_h = iou(hbox, &scene.gt.instances[gi.human_idx].bbox);
            if ov_h <= cfg.iou_threshold {
                continue;
            }
            let ov = match (t.object_det, gi.object_idx) {
                (_, None) if no_object && cfg.no_object_rule == NoObjectRule::HumanOnly => ov_h,
                (None, None) => ov_h,
                (Some(o), Some(go)) => {
                    let ov_o = iou(&scene.detections[o].bbox, &scene.gt.instances[go].bbox);
                    if ov_o <= cfg.iou_threshold {
                        continue;
                    }
                    ov_h.min(ov_o)
                }
                _ => continue,
            };
            if best.map_or(true, |(_, b)| ov > b) {
                best = Some((g, ov));
            }
        }
        if let Some((g, _)) = best {
            claimed[s][g] = true;
        }
        out.push(Matched {
            scene: s,
            score: t.score,
            tp: best.is_some(),
        });
    }
    Ok(out)
}

/// All-points interpolated AP for TP flags in descending-score order.
/// `None` when there is no ground truth.
pub fn average_precision(flags: &[bool], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut recall = Vec::with_capacity(flags.len());
    let mut precision = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    // precision envelope, right to left
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_recall {
            ap += (r - prev_recall) * p;
            prev_recall = *r;
        }
    }
    Some(ap)
}

/// Unweighted mean over verbs that have ground truth.
pub fn map_role(aps: &[VerbAP]) -> Result<f64> {
    let vals: Vec<f64> = aps.iter().filter_map(|v| v.ap).collect();
    if vals.is_empty() {
        return Err(Error::Evaluation("no verb has ground truth".into()));
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Per-verb AP table and mAP_role over every verb in `cats`.
pub fn evaluate(scenes: &[EvalScene<'_>], cats: &Categories, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut per_verb = Vec::with_capacity(cats.total_verbs());
    for verb in 0..cats.total_verbs() {
        let matched = match_triplets(scenes, verb, cats, cfg)?;
        let gt_count = scenes
            .iter()
            .map(|s| s.gt.interactions.iter().filter(|g| g.verb_id == verb).count())
            .sum();
        let flags: Vec<bool> = matched.iter().map(|m| m.tp).collect();
        let tp_count = flags.iter().filter(|&&f| f).count();
        per_verb.push(VerbAP {
            verb_id: verb,
            ap: average_precision(&flags, gt_count),
            tp_count,
            fp_count: flags.len() - tp_count,
            gt_count,
        });
    }
    let map_role = map_role(&per_verb)?;
    Ok(EvalReport { per_verb, map_role })
}
