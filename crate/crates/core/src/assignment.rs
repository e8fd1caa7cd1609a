//! Interaction-region decision and per-anchor training targets.
//!
//! An anchor is an interaction region of a ground-truth interaction when it
//! overlaps the union box enough and covers enough of both the human and the
//! object box. When several interactions claim one anchor, the one with the
//! highest overlapping level dominates: it supplies the regression targets and
//! its verbs are the positive labels. Verbs carried only by the other
//! claimants are ignored rather than treated as negatives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{coverage, encode_deltas, iou, union_box, Anchor, BBox, Delta4};

/// Class id reserved for people.
pub const HUMAN_CLASS: usize = 0;

/// Object categories and the shared verb list.
///
/// Verb ids `0..with_object_verbs` take an object; the next
/// `no_object_verbs` ids (e.g. "walk") do not. Interaction-classification
/// vectors and object-side action vectors cover only the with-object verbs;
/// human-side action vectors cover all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Categories {
    pub object_classes: usize,
    pub with_object_verbs: usize,
    pub no_object_verbs: usize,
}

impl Default for Categories {
    fn default() -> Self {
        Self {
            object_classes: 8,
            with_object_verbs: 6,
            no_object_verbs: 2,
        }
    }
}

impl Categories {
    /// Length of human-side action vectors (all verbs).
    pub fn human_actions(&self) -> usize {
        self.with_object_verbs + self.no_object_verbs
    }

    /// Length of interaction-score and object-side action vectors.
    pub fn object_actions(&self) -> usize {
        self.with_object_verbs
    }

    pub fn total_verbs(&self) -> usize {
        self.human_actions()
    }

    pub fn is_no_object(&self, verb: usize) -> bool {
        verb >= self.with_object_verbs && verb < self.total_verbs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.object_classes == 0 {
            return Err(Error::Config("need at least the human class".into()));
        }
        if self.total_verbs() == 0 {
            return Err(Error::Config("verb list is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtInstance {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtInteraction {
    pub human_idx: usize,
    pub object_idx: Option<usize>,
    pub verb_id: usize,
}

/// Ground truth of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtScene {
    pub scene_id: u64,
    pub width: f64,
    pub height: f64,
    pub instances: Vec<GtInstance>,
    pub interactions: Vec<GtInteraction>,
}

impl GtScene {
    /// Checks indices, classes and verb kinds against `cats`.
    pub fn validate(&self, cats: &Categories) -> Result<()> {
        let err = |msg: String| Error::Input(format!("scene {}: {msg}", self.scene_id));
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(err(format!("bad image size {}x{}", self.width, self.height)));
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.class_id >= cats.object_classes {
                return Err(err(format!(
                    "instance {i} has class {} but only {} classes are configured",
                    inst.class_id, cats.object_classes
                )));
            }
        }
        for (k, int) in self.interactions.iter().enumerate() {
            let human = self
                .instances
                .get(int.human_idx)
                .ok_or_else(|| err(format!("interaction {k}: human_idx {} out of range", int.human_idx)))?;
            if human.class_id != HUMAN_CLASS {
                return Err(err(format!("interaction {k}: subject is not a human")));
            }
            if int.verb_id >= cats.total_verbs() {
                return Err(err(format!("interaction {k}: verb {} out of range", int.verb_id)));
            }
            match int.object_idx {
                Some(o) if o >= self.instances.len() => {
                    return Err(err(format!("interaction {k}: object_idx {o} out of range")));
                }
                Some(_) if cats.is_no_object(int.verb_id) => {
                    return Err(err(format!(
                        "interaction {k}: verb {} takes no object",
                        int.verb_id
                    )));
                }
                None if !cats.is_no_object(int.verb_id) => {
                    return Err(err(format!(
                        "interaction {k}: verb {} requires an object",
                        int.verb_id
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Clips every instance box to the image frame.
    pub fn clip_to_image(&mut self) -> Result<()> {
        for inst in &mut self.instances {
            inst.bbox = inst.bbox.clip(self.width, self.height).map_err(|e| {
                Error::Input(format!(
                    "scene {}: instance lies outside the image: {e}",
                    self.scene_id
                ))
            })?;
        }
        Ok(())
    }

    /// Human, object and union boxes of a with-object interaction.
    pub fn interaction_boxes(&self, interaction: &GtInteraction) -> Option<InteractionBoxes> {
        let human = self.instances[interaction.human_idx].bbox;
        let object = self.instances[interaction.object_idx?].bbox;
        Some(InteractionBoxes {
            human,
            object,
            union: union_box(&human, &object),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionBoxes {
    pub human: BBox,
    pub object: BBox,
    pub union: BBox,
}

impl InteractionBoxes {
    pub fn flag(&self, anchor: &BBox, th: &Thresholds) -> bool {
        iou(anchor, &self.union) > th.t_u
            && coverage(anchor, &self.human) > th.t_h
            && coverage(anchor, &self.object) > th.t_o
    }

    pub fn level(&self, anchor: &BBox) -> f64 {
        iou(anchor, &self.union)
            + (coverage(anchor, &self.human) * coverage(anchor, &self.object)).sqrt()
    }
}

/// Overlap thresholds on the union box, the human box and the object box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub t_u: f64,
    pub t_h: f64,
    pub t_o: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            t_u: 0.25,
            t_h: 0.25,
            t_o: 0.25,
        }
    }
}

impl Thresholds {
    pub fn uniform(t: f64) -> Self {
        Self { t_u: t, t_h: t, t_o: t }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_u", self.t_u), ("t_h", self.t_h), ("t_o", self.t_o)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "pos")]
    Positive,
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "ign")]
    Ignored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAssignment {
    pub anchor_index: usize,
    pub matched_interaction: Option<usize>,
    pub class_targets: Vec<Label>,
    pub human_deltas: Option<Delta4>,
    pub object_deltas: Option<Delta4>,
}

impl RegionAssignment {
    pub fn is_foreground(&self) -> bool {
        self.matched_interaction.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Human,
    Object,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceActionTargets {
    pub anchor_index: usize,
    pub role: Role,
    pub action_targets: Vec<bool>,
}

fn with_object_boxes(
    interaction: &GtInteraction,
    scene: &GtScene,
) -> Result<InteractionBoxes> {
    scene.interaction_boxes(interaction).ok_or_else(|| {
        Error::Contract(format!(
            "verb {} has no object and cannot define interaction regions",
            interaction.verb_id
        ))
    })
}

/// Whether `anchor` is an interaction region of `interaction` (all three
/// comparisons strict).
pub fn overlap_flag(
    anchor: &Anchor,
    interaction: &GtInteraction,
    scene: &GtScene,
    th: &Thresholds,
) -> Result<bool> {
    Ok(with_object_boxes(interaction, scene)?.flag(&anchor.bbox, th))
}

/// `IoU(anchor, union) + sqrt(cov(anchor, human) * cov(anchor, object))`.
///
/// Interactions without an object never form regions; their level is 0.
pub fn overlap_level(anchor: &Anchor, interaction: &GtInteraction, scene: &GtScene) -> f64 {
    scene
        .interaction_boxes(interaction)
        .map_or(0.0, |b| b.level(&anchor.bbox))
}

/// Builds classification and regression targets for every anchor.
///
/// Interactions sharing the dominant interaction's human-object pair are one
/// multi-label interaction: all their verbs are positive. `num_classes` is the
/// length of the interaction-score vector (the with-object verbs).
pub fn assign_regions(
    anchors: &[Anchor],
    scene: &GtScene,
    th: &Thresholds,
    num_classes: usize,
) -> Result<Vec<RegionAssignment>> {
    // (interaction index, boxes) for interactions that can form regions
    let mut candidates = Vec::with_capacity(scene.interactions.len());
    for (k, int) in scene.interactions.iter().enumerate() {
        if int.object_idx.is_none() {
            continue;
        }
        if int.verb_id >= num_classes {
            return Err(Error::Contract(format!(
                "interaction {k} has verb {} but only {num_classes} interaction classes",
                int.verb_id
            )));
        }
        candidates.push((k, with_object_boxes(int, scene)?));
    }

    let mut flagged: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(anchors.len());
    for anchor in anchors {
        flagged.clear();
        let mut dominant: Option<(usize, f64)> = None;
        for (k, boxes) in &candidates {
            if !boxes.flag(&anchor.bbox, th) {
                continue;
            }
            flagged.push(*k);
            let level = boxes.level(&anchor.bbox);
            if dominant.map_or(true, |(_, best)| level > best) {
                dominant = Some((*k, level));
            }
        }

        let Some((k, _)) = dominant else {
            out.push(RegionAssignment {
                anchor_index: anchor.index,
                matched_interaction: None,
                class_targets: vec![Label::Negative; num_classes],
                human_deltas: None,
                object_deltas: None,
            });
            continue;
        };

        let dom = scene.interactions[k];
        let mut class_targets = vec![Label::Negative; num_classes];
        for &i in &flagged {
            let int = scene.interactions[i];
            if class_targets[int.verb_id] == Label::Negative {
                class_targets[int.verb_id] = Label::Ignored;
            }
        }
        for &i in &flagged {
            let int = scene.interactions[i];
            if int.human_idx == dom.human_idx && int.object_idx == dom.object_idx {
                class_targets[int.verb_id] = Label::Positive;
            }
        }

        let boxes = with_object_boxes(&dom, scene)?;
        out.push(RegionAssignment {
            anchor_index: anchor.index,
            matched_interaction: Some(k),
            class_targets,
            human_deltas: Some(encode_deltas(&anchor.bbox, &boxes.human)),
            object_deltas: Some(encode_deltas(&anchor.bbox, &boxes.object)),
        });
    }
    Ok(out)
}

/// Targets for the per-instance action branch.
///
/// An anchor is a positive sample only if its best-IoU instance reaches
/// `pos_iou` and takes part in at least one interaction. People acting as
/// subjects get the HUMAN role with their verb set over all verbs; instances
/// that are only ever acted upon get the OBJECT role over with-object verbs.
pub fn assign_instance_actions(
    anchors: &[Anchor],
    scene: &GtScene,
    cats: &Categories,
    pos_iou: f64,
) -> Result<Vec<InstanceActionTargets>> {
    if !(pos_iou > 0.0 && pos_iou < 1.0) {
        return Err(Error::Config(format!("pos_iou must lie in (0, 1), got {pos_iou}")));
    }
    let n = scene.instances.len();
    let mut subject_verbs = vec![vec![false; cats.human_actions()]; n];
    let mut object_verbs = vec![vec![false; cats.object_actions()]; n];
    let mut is_subject = vec![false; n];
    let mut is_object = vec![false; n];
    for int in &scene.interactions {
        is_subject[int.human_idx] = true;
        subject_verbs[int.human_idx][int.verb_id] = true;
        if let Some(o) = int.object_idx {
            is_object[o] = true;
            object_verbs[o][int.verb_id] = true;
        }
    }

    let out = anchors
        .iter()
        .map(|anchor| {
            let mut best: Option<(usize, f64)> = None;
            for (i, inst) in scene.instances.iter().enumerate() {
                let v = iou(&anchor.bbox, &inst.bbox);
                if best.map_or(true, |(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            let (role, action_targets) = match best {
                Some((i, v)) if v >= pos_iou => {
                    let human = scene.instances[i].class_id == HUMAN_CLASS;
                    if human && is_subject[i] {
                        (Role::Human, subject_verbs[i].clone())
                    } else if is_object[i] {
                        (Role::Object, object_verbs[i].clone())
                    } else {
                        (Role::None, Vec::new())
                    }
                }
                _ => (Role::None, Vec::new()),
            };
            InstanceActionTargets {
                anchor_index: anchor.index,
                role,
                action_targets,
            }
        })
        .collect();
    Ok(out)
}
