//! Scene-parallel drivers over whole files: inference and evaluation.

use rayon::prelude::*;

use super::io::{align_by_scene, DetectionsRecord, RegionsRecord, TripletsRecord};
use crate::assignment::{Categories, GtScene};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig, EvalReport, EvalScene};
use crate::geometry::Anchor;
use crate::voting::{vote_scene, VotingConfig};

/// Voting output for one scene plus region counts.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInference {
    pub record: TripletsRecord,
    pub regions_voting: usize,
    pub regions_matched: usize,
}

/// Votes every scene of `detections`. Regions are paired by scene id; scenes
/// without a region record still get their no-object triplets. Output is in
/// ascending scene-id order.
pub fn infer(
    anchors: &[Anchor],
    detections: &[DetectionsRecord],
    regions: Vec<RegionsRecord>,
    cats: &Categories,
    cfg: &VotingConfig,
) -> Result<Vec<SceneInference>> {
    cfg.validate()?;
    let mut order: Vec<&DetectionsRecord> = detections.iter().collect();
    order.sort_by_key(|d| d.scene_id);
    let ids: Vec<u64> = order.iter().map(|d| d.scene_id).collect();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("detections: a scene appears twice".into()));
    }
    let regions = align_by_scene(
        &ids,
        regions,
        |r| r.scene_id,
        |scene_id| RegionsRecord {
            scene_id,
            regions: Vec::new(),
        },
        "regions",
    )?;
    order
        .par_iter()
        .zip(regions.par_iter())
        .map(|(d, r)| {
            let out = vote_scene(anchors, &d.detections, &r.regions, cats, cfg)
                .map_err(|e| Error::Input(format!("scene {}: {e}", d.scene_id)))?;
            Ok(SceneInference {
                record: TripletsRecord {
                    scene_id: d.scene_id,
                    triplets: out.triplets,
                },
                regions_voting: out.regions_voting,
                regions_matched: out.regions_matched,
            })
        })
        .collect()
}

/// Role mAP over the ground-truth scenes. Detections and triplets are paired
/// with the ground truth by scene id; missing scenes count as empty.
pub fn evaluate_records(
    gt: &[GtScene],
    detections: Vec<DetectionsRecord>,
    triplets: Vec<TripletsRecord>,
    cats: &Categories,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let ids: Vec<u64> = gt.iter().map(|s| s.scene_id).collect();
    let detections = align_by_scene(
        &ids,
        detections,
        |r| r.scene_id,
        |scene_id| DetectionsRecord {
            scene_id,
            detections: Vec::new(),
        },
        "detections",
    )?;
    let triplets = align_by_scene(
        &ids,
        triplets,
        |r| r.scene_id,
        |scene_id| TripletsRecord {
            scene_id,
            triplets: Vec::new(),
        },
        "triplets",
    )?;
    let scenes: Vec<EvalScene<'_>> = gt
        .iter()
        .zip(&detections)
        .zip(&triplets)
        .map(|((g, d), t)| EvalScene {
            gt: g,
            detections: &d.detections,
            triplets: &t.triplets,
        })
        .collect();
    evaluate(&scenes, cats, cfg)
}

/// Inference followed by evaluation, as used by the ablation and acceptance
/// drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub report: EvalReport,
    pub triplets: Vec<TripletsRecord>,
    pub regions_voting: usize,
    pub regions_matched: usize,
}

pub fn run_pipeline(
    anchors: &[Anchor],
    gt: &[GtScene],
    detections: &[DetectionsRecord],
    regions: &[RegionsRecord],
    cats: &Categories,
    voting: &VotingConfig,
    eval: &EvalConfig,
) -> Result<PipelineRun> {
    let inferred = infer(anchors, detections, regions.to_vec(), cats, voting)?;
    let regions_voting = inferred.iter().map(|s| s.regions_voting).sum();
    let regions_matched = inferred.iter().map(|s| s.regions_matched).sum();
    let triplets: Vec<TripletsRecord> = inferred.into_iter().map(|s| s.record).collect();
    let report = evaluate_records(gt, detections.to_vec(), triplets.clone(), cats, eval)?;
    Ok(PipelineRun {
        report,
        triplets,
        regions_voting,
        regions_matched,
    })
}
