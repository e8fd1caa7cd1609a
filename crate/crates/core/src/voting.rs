//! Voting-based inference.
//!
//! Each interaction region (an anchor with an interaction-score vector and
//! regressed human/object boxes) is matched to a detected human and then to
//! a detected object. The match to the object is soft: a Gaussian over the
//! object's position relative to the human, scaled by the anchor size, both
//! picks the object and weights the region's vote. Votes for the same
//! human-object pair are summed, never suppressed.
//!
//! Cost is linear in the number of regions (times the detection count per
//! region for matching).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assignment::{Categories, HUMAN_CLASS};
use crate::error::{Error, Result};
use crate::geometry::{coverage, iou, Anchor, BBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDetection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
    pub action_scores: Vec<f64>,
}

impl InstanceDetection {
    pub fn is_human(&self) -> bool {
        self.class_id == HUMAN_CLASS
    }

    pub fn validate(&self, cats: &Categories) -> Result<()> {
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Input(format!("detection score {} outside [0, 1]", self.score)));
        }
        if self.action_scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Input("action score outside [0, 1]".into()));
        }
        let need = if self.is_human() {
            cats.human_actions()
        } else {
            cats.object_actions()
        };
        if self.action_scores.len() < need {
            return Err(Error::Input(format!(
                "detection of class {} has {} action scores, expected {need}",
                self.class_id,
                self.action_scores.len()
            )));
        }
        Ok(())
    }
}

/// Output of the interaction head for one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPrediction {
    pub anchor_index: usize,
    pub inter_scores: Vec<f64>,
    pub human_box: BBox,
    pub object_box: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VotingConfig {
    /// Standard deviation of the relative object-location Gaussian.
    pub sigma: f64,
    pub t_h: f64,
    pub t_o: f64,
    /// When set, whole regions are suppressed greedily before voting
    /// (ablation only). `1.0` suppresses nothing.
    #[serde(default)]
    pub region_nms_iou: Option<f64>,
    pub score_floor: f64,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            sigma: 0.9,
            t_h: 0.25,
            t_o: 0.25,
            region_nms_iou: None,
            score_floor: 1e-6,
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (name, v) in [("t_h", self.t_h), ("t_o", self.t_o)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if let Some(t) = self.region_nms_iou {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("region_nms_iou must lie in (0, 1], got {t}")));
            }
        }
        if !(self.score_floor >= 0.0) {
            return Err(Error::Config("score_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// A scored `<human, verb, object>` triplet. Scores are unnormalized and only
/// comparable within one verb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletScore {
    pub human_det: usize,
    pub object_det: Option<usize>,
    pub verb_id: usize,
    pub score: f64,
}

/// Human detection for a region: among humans the anchor covers by more than
/// `t_h`, the one with the highest IoU. `None` abandons the region.
pub fn match_region_to_human(
    anchor: &Anchor,
    detections: &[InstanceDetection],
    t_h: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, det) in detections.iter().enumerate() {
        if !det.is_human() || coverage(&anchor.bbox, &det.bbox) <= t_h {
            continue;
        }
        let v = iou(&anchor.bbox, &det.bbox);
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Gaussian likelihood of an object centered at `object_center`.
///
/// The observed offset uses the detected human center; the expected offset
/// uses the region's regressed human and object centers. Both are divided by
/// the anchor width and height.
pub fn location_prob(
    region: &RegionPrediction,
    anchor: &Anchor,
    human: &InstanceDetection,
    object_center: (f64, f64),
    sigma: f64,
) -> f64 {
    let (aw, ah) = (anchor.bbox.w(), anchor.bbox.h());
    let (hx, hy) = human.bbox.center();
    let vx = (object_center.0 - hx) / aw;
    let vy = (object_center.1 - hy) / ah;
    let mx = (region.object_box.cx() - region.human_box.cx()) / aw;
    let my = (region.object_box.cy() - region.human_box.cy()) / ah;
    let d2 = (vx - mx).powi(2) + (vy - my).powi(2);
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// `s_inter * p`, per class.
pub fn weighted_loc_score(region: &RegionPrediction, p: f64) -> Vec<f64> {
    region.inter_scores.iter().map(|s| s * p).collect()
}

/// Object detection for a region already matched to `human_det`: among
/// detections (people included, the matched human excluded) covered by more
/// than `t_o`, the one with the highest location probability. Returns the index
/// and that probability.
pub fn match_region_to_object(
    region: &RegionPrediction,
    anchor: &Anchor,
    detections: &[InstanceDetection],
    human_det: usize,
    t_o: f64,
    sigma: f64,
) -> Option<(usize, f64)> {
    let human = &detections[human_det];
    let mut best: Option<(usize, f64)> = None;
    for (i, det) in detections.iter().enumerate() {
        if i == human_det || coverage(&anchor.bbox, &det.bbox) <= t_o {
            continue;
        }
        let p = location_prob(region, anchor, human, det.bbox.center(), sigma);
        if best.map_or(true, |(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    best
}

/// Region after both matching steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedRegion {
    pub region: usize,
    pub human_det: usize,
    pub object_det: usize,
    pub loc_scores: Vec<f64>,
}

/// Matches one region; `None` when either matching step finds no candidate.
pub fn match_region(
    region: &RegionPrediction,
    anchor: &Anchor,
    detections: &[InstanceDetection],
    cfg: &VotingConfig,
) -> Option<(usize, usize, Vec<f64>)> {
    let h = match_region_to_human(anchor, detections, cfg.t_h)?;
    let (o, p) = match_region_to_object(region, anchor, detections, h, cfg.t_o, cfg.sigma)?;
    Some((h, o, weighted_loc_score(region, p)))
}

/// Sums the weighted localization scores of matched regions per
/// `(human_det, object_det)` pair.
///
/// Contributions are added in anchor-index order (then by value), so the
/// result does not depend on the order regions arrive in.
pub fn fuse_pairs(matched: &[MatchedRegion], regions: &[RegionPrediction]) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut order: Vec<&MatchedRegion> = matched.iter().collect();
    order.sort_by(|a, b| {
        regions[a.region]
            .anchor_index
            .cmp(&regions[b.region].anchor_index)
            .then_with(|| {
                a.loc_scores
                    .iter()
                    .zip(&b.loc_scores)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut fused: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for m in order {
        let acc = fused
            .entry((m.human_det, m.object_det))
            .or_insert_with(|| vec![0.0; m.loc_scores.len()]);
        for (a, s) in acc.iter_mut().zip(&m.loc_scores) {
            *a += s;
        }
    }
    fused
}

/// Final triplet scores.
///
/// With an object: `s_h * s_o * (act_h[c] + act_o[c]) * fuse[c]`.
/// No-object verbs, for every human: `s_h * act_h[c]`.
/// Triplets below `score_floor` are dropped; the rest are sorted by verb,
/// descending score, human index, object index.
pub fn score_triplets(
    fused: &BTreeMap<(usize, usize), Vec<f64>>,
    detections: &[InstanceDetection],
    cats: &Categories,
    cfg: &VotingConfig,
) -> Vec<TripletScore> {
    let mut out = Vec::new();
    for (&(h, o), fuse) in fused {
        let (hd, od) = (&detections[h], &detections[o]);
        for (c, &f) in fuse.iter().enumerate().take(cats.object_actions()) {
            let score = hd.score * od.score * (hd.action_scores[c] + od.action_scores[c]) * f;
            if score >= cfg.score_floor && score > 0.0 {
                out.push(TripletScore {
                    human_det: h,
                    object_det: Some(o),
                    verb_id: c,
                    score,
                });
            }
        }
    }
    for (h, hd) in detections.iter().enumerate().filter(|(_, d)| d.is_human()) {
        for c in cats.object_actions()..cats.total_verbs() {
            let score = hd.score * hd.action_scores[c];
            if score >= cfg.score_floor && score > 0.0 {
                out.push(TripletScore {
                    human_det: h,
                    object_det: None,
                    verb_id: c,
                    score,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.verb_id
            .cmp(&b.verb_id)
            .then(b.score.total_cmp(&a.score))
            .then(a.human_det.cmp(&b.human_det))
            .then(a.object_det.cmp(&b.object_det))
    });
    out
}

/// Greedy whole-region suppression keyed on each region's best class score.
/// Returns the indices of surviving regions in input order.
pub fn suppress_regions(regions: &[RegionPrediction], anchors: &[Anchor], iou_threshold: f64) -> Vec<usize> {
    let key = |r: &RegionPrediction| r.inter_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| {
        key(&regions[b])
            .total_cmp(&key(&regions[a]))
            .then(regions[a].anchor_index.cmp(&regions[b].anchor_index))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let bi = &anchors[regions[i].anchor_index].bbox;
        if kept
            .iter()
            .all(|&k| iou(bi, &anchors[regions[k].anchor_index].bbox) <= iou_threshold)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Per-scene voting result with bookkeeping counts.
#[derive(Debug, Clone, PartialEq)]
pub struct VotingOutput {
    pub triplets: Vec<TripletScore>,
    /// Regions that entered voting (after optional suppression).
    pub regions_voting: usize,
    /// Regions matched to both a human and an object (the size of `A_pos`).
    pub regions_matched: usize,
}

fn check_region(region: &RegionPrediction, pos: usize, anchors: &[Anchor], cats: &Categories) -> Result<()> {
    if region.anchor_index >= anchors.len() {
        return Err(Error::Input(format!(
            "region {pos}: anchor_index {} out of range (grid has {} anchors)",
            region.anchor_index,
            anchors.len()
        )));
    }
    if region.inter_scores.len() != cats.object_actions() {
        return Err(Error::Input(format!(
            "region {pos}: {} interaction scores, expected {}",
            region.inter_scores.len(),
            cats.object_actions()
        )));
    }
    Ok(())
}

/// Runs the whole voting pipeline for one image.
pub fn vote_scene(
    anchors: &[Anchor],
    detections: &[InstanceDetection],
    regions: &[RegionPrediction],
    cats: &Categories,
    cfg: &VotingConfig,
) -> Result<VotingOutput> {
    for (pos, r) in regions.iter().enumerate() {
        check_region(r, pos, anchors, cats)?;
    }
    for d in detections {
        d.validate(cats)?;
    }
    let active: Vec<usize> = match cfg.region_nms_iou {
        Some(t) if t < 1.0 => suppress_regions(regions, anchors, t),
        _ => (0..regions.len()).collect(),
    };
    let matched: Vec<MatchedRegion> = active
        .iter()
        .filter_map(|&i| {
            let r = &regions[i];
            match_region(r, &anchors[r.anchor_index], detections, cfg).map(|(h, o, loc)| MatchedRegion {
                region: i,
                human_det: h,
                object_det: o,
                loc_scores: loc,
            })
        })
        .collect();
    let fused = fuse_pairs(&matched, regions);
    Ok(VotingOutput {
        triplets: score_triplets(&fused, detections, cats, cfg),
        regions_voting: active.len(),
        regions_matched: matched.len(),
    })
}

/// [`vote_scene`] returning only the triplets.
pub fn run_voting(
    anchors: &[Anchor],
    detections: &[InstanceDetection],
    regions: &[RegionPrediction],
    cats: &Categories,
    cfg: &VotingConfig,
) -> Result<Vec<TripletScore>> {
    Ok(vote_scene(anchors, detections, regions, cats, cfg)?.triplets)
}

/// Human-centric object-location map: the summed weighted localization score
/// of every region matched to `human_det`, evaluated at each grid cell center.
///
/// Regions with no qualifying object still contribute here, unlike pair
/// scoring. `verb` selects one class; `None` sums over classes.
/// Returns `rows x cols` values, row-major.
pub fn human_location_map(
    anchors: &[Anchor],
    detections: &[InstanceDetection],
    regions: &[RegionPrediction],
    human_det: usize,
    verb: Option<usize>,
    cfg: &VotingConfig,
    grid: (usize, usize, f64),
) -> Result<Vec<Vec<f64>>> {
    let (rows, cols, step) = grid;
    let human = detections
        .get(human_det)
        .filter(|d| d.is_human())
        .ok_or_else(|| Error::Input(format!("detection {human_det} is not a human")))?;
    let mut map = vec![vec![0.0; cols]; rows];
    for (pos, r) in regions.iter().enumerate() {
        let anchor = anchors.get(r.anchor_index).ok_or_else(|| {
            Error::Input(format!("region {pos}: anchor_index {} out of range", r.anchor_index))
        })?;
        if match_region_to_human(anchor, detections, cfg.t_h) != Some(human_det) {
            continue;
        }
        let weight = match verb {
            Some(c) => *r
                .inter_scores
                .get(c)
                .ok_or_else(|| Error::Input(format!("verb {c} out of range")))?,
            None => r.inter_scores.iter().sum(),
        };
        for (i, row) in map.iter_mut().enumerate() {
            let y = step * (i as f64 + 0.5);
            for (j, cell) in row.iter_mut().enumerate() {
                let x = step * (j as f64 + 0.5);
                *cell += weight * location_prob(r, anchor, human, (x, y), cfg.sigma);
            }
        }
    }
    Ok(map)
}
