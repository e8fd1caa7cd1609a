//! Synthetic scenes with known interactions.
//!
//! Each scene holds a few well-separated groups: one person, the objects they
//! interact with, and some nearby distractor objects that nobody interacts
//! with. From the ground truth the generator simulates what an ideal detector
//! and an ideal interaction head would output, then corrupts both with
//! configurable noise:
//!
//! * detections are the ground-truth boxes with Gaussian corner jitter, with
//!   scores `1 - noise` for true labels and `noise` for false ones;
//! * every anchor flagged as an interaction region yields a region
//!   prediction whose regressed boxes are the dominant pair's boxes plus
//!   jitter and whose class scores peak on that pair's verbs;
//! * a fraction `drop_rate` of those regions is discarded.
//!
//! With all noise at zero the outputs are exact, which makes the generator an
//! oracle for the downstream pipeline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::io::{DetectionsRecord, RegionsRecord};
use super::rng::{stream, TAG_DETECTION, TAG_LAYOUT, TAG_REGION};
use crate::assignment::{Categories, GtInstance, GtInteraction, GtScene, InteractionBoxes, Thresholds, HUMAN_CLASS};
use crate::error::{Error, Result};
use crate::geometry::{coverage, generate_anchors, Anchor, AnchorConfig, BBox};
use crate::voting::{InstanceDetection, RegionPrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub scene_count: usize,
    /// People per scene, inclusive range.
    pub humans: [usize; 2],
    /// Objects each person interacts with, inclusive range.
    pub objects_per_human: [usize; 2],
    /// Non-interacting objects placed near each person, inclusive range.
    pub distractors_per_human: [usize; 2],
    /// Chance that a human-object pair carries a second verb.
    pub second_verb_prob: f64,
    /// Chance that a person also performs a no-object verb.
    pub no_object_prob: f64,
    /// Corner jitter of detected boxes, pixels.
    pub box_noise: f64,
    /// Corner jitter of regressed region boxes, pixels.
    pub region_box_noise: f64,
    /// Spread of detection score noise.
    pub score_noise: f64,
    /// Spread of noise on region interaction scores.
    pub region_score_noise: f64,
    /// Fraction of interaction regions removed.
    pub drop_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scene_count: 50,
            humans: [1, 4],
            objects_per_human: [1, 2],
            distractors_per_human: [1, 2],
            second_verb_prob: 0.3,
            no_object_prob: 0.5,
            box_noise: 0.0,
            region_box_noise: 0.0,
            score_noise: 0.0,
            region_score_noise: 0.0,
            drop_rate: 0.0,
        }
    }
}

impl SynthConfig {
    /// The noisy benchmark used for ablations.
    pub fn noisy_benchmark(seed: u64) -> Self {
        Self {
            seed,
            box_noise: 2.0,
            region_box_noise: 25.0,
            score_noise: 0.2,
            region_score_noise: 0.8,
            drop_rate: 0.2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("humans", self.humans),
            ("objects_per_human", self.objects_per_human),
            ("distractors_per_human", self.distractors_per_human),
        ] {
            if lo > hi {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        if self.humans[0] == 0 {
            return Err(Error::Config("scenes need at least one person".into()));
        }
        if self.humans[1] > 16 {
            return Err(Error::Config("at most 16 people per scene".into()));
        }
        if self.objects_per_human[1] + self.distractors_per_human[1] > 6 {
            return Err(Error::Config("at most 6 objects per person".into()));
        }
        for (name, v) in [
            ("box_noise", self.box_noise),
            ("region_box_noise", self.region_box_noise),
            ("score_noise", self.score_noise),
            ("region_score_noise", self.region_score_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("drop_rate", self.drop_rate),
            ("second_verb_prob", self.second_verb_prob),
            ("no_object_prob", self.no_object_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Ground truth plus simulated network outputs, in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub gt: Vec<GtScene>,
    pub detections: Vec<DetectionsRecord>,
    pub regions: Vec<RegionsRecord>,
    /// Anchors flagged for at least one interaction, per scene, before dropping.
    pub flagged: Vec<Vec<usize>>,
}

const MAX_LAYOUT_ATTEMPTS: usize = 200;
const CELL_MARGIN: f64 = 6.0;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Score of a true label under noise: exactly 1 without noise.
fn noisy_high(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    (1.0 - sigma * normal(rng).abs()).clamp(0.0, 1.0)
}

/// Score of a false label under noise: exactly 0 without noise.
fn noisy_low(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // `+ 0.0` turns a negative zero into 0.0
    (sigma * normal(rng)).clamp(0.0, 1.0) + 0.0
}

fn jitter(rng: &mut ChaCha8Rng, b: &BBox, sigma: f64, min_size: f64) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    let [x1, y1, x2, y2] = b.corners();
    let x1 = x1 + sigma * normal(rng);
    let y1 = y1 + sigma * normal(rng);
    let x2 = (x2 + sigma * normal(rng)).max(x1 + min_size);
    let y2 = (y2 + sigma * normal(rng)).max(y1 + min_size);
    BBox::from_corners(x1, y1, x2, y2).expect("jittered box keeps a minimum size")
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Box of the given size centered near `(cx, cy)`, shifted to lie inside `cell`.
fn place_in(cell: [f64; 4], cx: f64, cy: f64, w: f64, h: f64) -> BBox {
    let [x1, y1, x2, y2] = cell;
    let cx = cx.clamp(x1 + CELL_MARGIN + w / 2.0, x2 - CELL_MARGIN - w / 2.0);
    let cy = cy.clamp(y1 + CELL_MARGIN + h / 2.0, y2 - CELL_MARGIN - h / 2.0);
    BBox::new(cx, cy, w, h).expect("positive size")
}

struct Group {
    human: BBox,
    objects: Vec<BBox>,
    distractors: Vec<BBox>,
    /// (object position in `objects`, verb)
    verbs: Vec<(usize, usize)>,
    no_object_verb: Option<usize>,
}

fn draw_group(rng: &mut ChaCha8Rng, cell: [f64; 4], cfg: &SynthConfig, cats: &Categories) -> Group {
    let [x1, y1, x2, y2] = cell;
    let (cw, ch) = (x2 - x1, y2 - y1);
    let hw = uniform(rng, 0.12, 0.25) * cw;
    let hh = (hw * uniform(rng, 1.6, 2.4)).min(ch * 0.6);
    let human = place_in(
        cell,
        uniform(rng, x1 + 0.3 * cw, x2 - 0.3 * cw),
        uniform(rng, y1 + 0.3 * ch, y2 - 0.3 * ch),
        hw,
        hh,
    );
    let n_obj = rng.gen_range(cfg.objects_per_human[0]..=cfg.objects_per_human[1]);
    let n_dis = rng.gen_range(cfg.distractors_per_human[0]..=cfg.distractors_per_human[1]);
    let draw_object = |rng: &mut ChaCha8Rng| {
        let w = uniform(rng, 0.35, 0.9) * hw;
        let h = uniform(rng, 0.35, 0.9) * hw;
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let cx = human.cx() + side * uniform(rng, 0.3, 0.9) * (hw + w);
        let cy = human.cy() + uniform(rng, -0.45, 0.45) * hh;
        place_in(cell, cx, cy, w, h)
    };
    let objects: Vec<BBox> = (0..n_obj).map(|_| draw_object(rng)).collect();
    let distractors: Vec<BBox> = (0..n_dis).map(|_| draw_object(rng)).collect();

    let mut verbs = Vec::new();
    if cats.with_object_verbs > 0 {
        for o in 0..objects.len() {
            let v = rng.gen_range(0..cats.with_object_verbs);
            verbs.push((o, v));
            if cats.with_object_verbs > 1 && rng.gen_bool(cfg.second_verb_prob) {
                let mut w = rng.gen_range(0..cats.with_object_verbs - 1);
                if w >= v {
                    w += 1;
                }
                verbs.push((o, w));
            }
        }
    }
    let no_object_verb = (cats.no_object_verbs > 0 && rng.gen_bool(cfg.no_object_prob))
        .then(|| cats.with_object_verbs + rng.gen_range(0..cats.no_object_verbs));
    Group {
        human,
        objects,
        distractors,
        verbs,
        no_object_verb,
    }
}

fn assemble(scene_id: u64, width: f64, height: f64, groups: &[Group], rng: &mut ChaCha8Rng, cats: &Categories) -> GtScene {
    let mut instances = Vec::new();
    let mut interactions = Vec::new();
    let object_class = |rng: &mut ChaCha8Rng| {
        if cats.object_classes > 1 {
            rng.gen_range(1..cats.object_classes)
        } else {
            HUMAN_CLASS
        }
    };
    for g in groups {
        let h = instances.len();
        instances.push(GtInstance {
            bbox: g.human,
            class_id: HUMAN_CLASS,
        });
        let first_obj = instances.len();
        for b in g.objects.iter().chain(&g.distractors) {
            let class_id = object_class(rng);
            instances.push(GtInstance { bbox: *b, class_id });
        }
        for &(o, verb) in &g.verbs {
            interactions.push(GtInteraction {
                human_idx: h,
                object_idx: Some(first_obj + o),
                verb_id: verb,
            });
        }
        if let Some(verb) = g.no_object_verb {
            interactions.push(GtInteraction {
                human_idx: h,
                object_idx: None,
                verb_id: verb,
            });
        }
    }
    GtScene {
        scene_id,
        width,
        height,
        instances,
        interactions,
    }
}

/// Anchors flagged for each with-object interaction: `(interaction, anchors)`.
fn flagged_per_interaction(scene: &GtScene, anchors: &[Anchor], th: &Thresholds) -> Vec<(usize, Vec<usize>)> {
    scene
        .interactions
        .iter()
        .enumerate()
        .filter_map(|(k, int)| scene.interaction_boxes(int).map(|b| (k, b)))
        .map(|(k, boxes)| {
            let hits = anchors
                .iter()
                .filter(|a| boxes.flag(&a.bbox, th))
                .map(|a| a.index)
                .collect();
            (k, hits)
        })
        .collect()
}

/// Accepts a layout when every interaction has at least one region and no
/// region of one person covers another person beyond `t_h`.
fn layout_ok(scene: &GtScene, anchors: &[Anchor], th: &Thresholds) -> bool {
    for (k, hits) in flagged_per_interaction(scene, anchors, th) {
        if hits.is_empty() {
            return false;
        }
        let own = scene.interactions[k].human_idx;
        for &a in &hits {
            let ab = &anchors[a].bbox;
            let intrudes = scene
                .instances
                .iter()
                .enumerate()
                .any(|(i, inst)| i != own && inst.class_id == HUMAN_CLASS && coverage(ab, &inst.bbox) > th.t_h);
            if intrudes {
                return false;
            }
        }
    }
    true
}

/// Ground-truth scene `scene_id`. Depends only on the seed, the scene id, the
/// image size in `anchor_cfg` and the categories.
pub fn gen_scene(cfg: &SynthConfig, scene_id: u64, anchors: &[Anchor], anchor_cfg: &AnchorConfig, cats: &Categories) -> Result<GtScene> {
    let mut rng = stream(cfg.seed, &[scene_id, TAG_LAYOUT]);
    let (width, height) = (anchor_cfg.image_width, anchor_cfg.image_height);
    let reference = Thresholds::default();
    for _ in 0..MAX_LAYOUT_ATTEMPTS {
        let n = rng.gen_range(cfg.humans[0]..=cfg.humans[1]);
        let cols = (n as f64).sqrt().ceil() as usize;
        let rows = n.div_ceil(cols);
        let (cw, ch) = (width / cols as f64, height / rows as f64);
        let groups: Vec<Group> = (0..n)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                let cell = [c as f64 * cw, r as f64 * ch, (c + 1) as f64 * cw, (r + 1) as f64 * ch];
                draw_group(&mut rng, cell, cfg, cats)
            })
            .collect();
        let scene = assemble(scene_id, width, height, &groups, &mut rng, cats);
        if layout_ok(&scene, anchors, &reference) {
            return Ok(scene);
        }
    }
    Err(Error::Config(format!(
        "could not lay out scene {scene_id} in {MAX_LAYOUT_ATTEMPTS} attempts; image too small for the anchor grid?"
    )))
}

/// Simulated instance detections, one per ground-truth instance in order.
pub fn gen_detections(cfg: &SynthConfig, scene: &GtScene, cats: &Categories) -> Vec<InstanceDetection> {
    let n = scene.instances.len();
    let mut subject = vec![vec![false; cats.human_actions()]; n];
    let mut object = vec![vec![false; cats.object_actions()]; n];
    for int in &scene.interactions {
        subject[int.human_idx][int.verb_id] = true;
        if let Some(o) = int.object_idx {
            object[o][int.verb_id] = true;
        }
    }
    scene
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = stream(cfg.seed, &[scene.scene_id, TAG_DETECTION, i as u64]);
            let bbox = jitter(&mut rng, &inst.bbox, cfg.box_noise, 2.0);
            let score = noisy_high(&mut rng, cfg.score_noise);
            let truth = if inst.class_id == HUMAN_CLASS { &subject[i] } else { &object[i] };
            let action_scores = truth
                .iter()
                .map(|&t| {
                    if t {
                        noisy_high(&mut rng, cfg.score_noise)
                    } else {
                        noisy_low(&mut rng, cfg.score_noise)
                    }
                })
                .collect();
            InstanceDetection {
                bbox,
                class_id: inst.class_id,
                score,
                action_scores,
            }
        })
        .collect()
}

/// Simulated interaction-head outputs for every anchor flagged under `th`,
/// minus dropped ones. Returns `(regions, flagged anchors)`.
///
/// An anchor's output depends only on the seed, the scene and the anchor, so
/// changing thresholds adds or removes regions without reshuffling the rest.
pub fn gen_regions(
    cfg: &SynthConfig,
    scene: &GtScene,
    anchors: &[Anchor],
    cats: &Categories,
    th: &Thresholds,
) -> (Vec<RegionPrediction>, Vec<usize>) {
    let candidates: Vec<(usize, InteractionBoxes)> = scene
        .interactions
        .iter()
        .enumerate()
        .filter_map(|(k, int)| scene.interaction_boxes(int).map(|b| (k, b)))
        .collect();
    let mut regions = Vec::new();
    let mut flagged = Vec::new();
    for anchor in anchors {
        let mut dominant: Option<(usize, f64)> = None;
        for (k, boxes) in &candidates {
            if boxes.flag(&anchor.bbox, th) {
                let level = boxes.level(&anchor.bbox);
                if dominant.map_or(true, |(_, best)| level > best) {
                    dominant = Some((*k, level));
                }
            }
        }
        let Some((k, _)) = dominant else { continue };
        flagged.push(anchor.index);

        let mut rng = stream(cfg.seed, &[scene.scene_id, TAG_REGION, anchor.index as u64]);
        if rng.gen::<f64>() < cfg.drop_rate {
            continue;
        }
        let dom = scene.interactions[k];
        let mut truth = vec![false; cats.object_actions()];
        for int in &scene.interactions {
            if int.human_idx == dom.human_idx && int.object_idx == dom.object_idx {
                truth[int.verb_id] = true;
            }
        }
        let inter_scores = truth
            .iter()
            .map(|&t| {
                if t {
                    noisy_high(&mut rng, cfg.region_score_noise)
                } else {
                    noisy_low(&mut rng, cfg.region_score_noise)
                }
            })
            .collect();
        let boxes = scene.interaction_boxes(&dom).expect("dominant interaction has an object");
        regions.push(RegionPrediction {
            anchor_index: anchor.index,
            inter_scores,
            human_box: jitter(&mut rng, &boxes.human, cfg.region_box_noise, 2.0),
            object_box: jitter(&mut rng, &boxes.object, cfg.region_box_noise, 2.0),
        });
    }
    (regions, flagged)
}

/// Generates `cfg.scene_count` scenes with detections and region predictions.
pub fn gen_synth(cfg: &SynthConfig, anchor_cfg: &AnchorConfig, cats: &Categories, th: &Thresholds) -> Result<SynthData> {
    use rayon::prelude::*;

    cfg.validate()?;
    cats.validate()?;
    th.validate()?;
    if cats.object_classes < 2 {
        return Err(Error::Config("synthetic scenes need at least one non-human object class".into()));
    }
    let anchors = generate_anchors(anchor_cfg)?;
    let scenes: Vec<_> = (0..cfg.scene_count as u64)
        .into_par_iter()
        .map(|id| {
            let gt = gen_scene(cfg, id, &anchors, anchor_cfg, cats)?;
            let detections = gen_detections(cfg, &gt, cats);
            let (regions, flagged) = gen_regions(cfg, &gt, &anchors, cats, th);
            Ok((gt, detections, regions, flagged))
        })
        .collect::<Result<_>>()?;

    let mut data = SynthData {
        gt: Vec::with_capacity(scenes.len()),
        detections: Vec::with_capacity(scenes.len()),
        regions: Vec::with_capacity(scenes.len()),
        flagged: Vec::with_capacity(scenes.len()),
    };
    for (gt, detections, regions, flagged) in scenes {
        data.detections.push(DetectionsRecord {
            scene_id: gt.scene_id,
            detections,
        });
        data.regions.push(RegionsRecord {
            scene_id: gt.scene_id,
            regions,
        });
        data.flagged.push(flagged);
        data.gt.push(gt);
    }
    Ok(data)
}
