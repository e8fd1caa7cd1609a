//! Brute-force oracles and random scene builders shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hoi_vote::assignment::{Categories, GtInstance, GtInteraction, GtScene, Label, RegionAssignment, Thresholds};
use hoi_vote::geometry::{Anchor, AnchorConfig, BBox, LevelSpec};
use hoi_vote::losses::ClassTargets;
use hoi_vote::voting::{InstanceDetection, RegionPrediction, TripletScore, VotingConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 256x256 image, strides 16/32/64: 3024 anchors.
pub fn oracle_grid() -> AnchorConfig {
    AnchorConfig {
        image_width: 256.0,
        image_height: 256.0,
        levels: [16.0, 32.0, 64.0]
            .iter()
            .map(|&stride| LevelSpec { stride, base_size: 4.0 * stride })
            .collect(),
        ..AnchorConfig::default()
    }
}

fn inter(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    iw * ih
}

pub fn naive_iou(a: &BBox, b: &BBox) -> f64 {
    let (ca, cb) = (a.corners(), b.corners());
    let i = inter(ca, cb);
    if i <= 0.0 {
        0.0
    } else {
        i / (a.w() * a.h() + b.w() * b.h() - i)
    }
}

pub fn naive_cov(a: &BBox, b: &BBox) -> f64 {
    inter(a.corners(), b.corners()) / (b.w() * b.h())
}

fn naive_union(h: &BBox, o: &BBox) -> BBox {
    let (a, b) = (h.corners(), o.corners());
    BBox::from_corners(a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])).unwrap()
}

/// Double loop over anchors and interactions, written directly from the
/// definitions with no shared helpers.
pub fn brute_assign(anchors: &[Anchor], scene: &GtScene, th: &Thresholds, classes: usize) -> Vec<RegionAssignment> {
    let mut out = Vec::new();
    for a in anchors {
        let ab = &a.bbox;
        let mut flagged = Vec::new();
        let mut best: Option<usize> = None;
        let mut best_level = f64::NEG_INFINITY;
        for (k, g) in scene.interactions.iter().enumerate() {
            let Some(o) = g.object_idx else { continue };
            let hb = scene.instances[g.human_idx].bbox;
            let ob = scene.instances[o].bbox;
            let ub = naive_union(&hb, &ob);
            let (u, ch, co) = (naive_iou(ab, &ub), naive_cov(ab, &hb), naive_cov(ab, &ob));
            if u > th.t_u && ch > th.t_h && co > th.t_o {
                flagged.push(k);
                let level = u + (ch * co).sqrt();
                if best.is_none() || level > best_level {
                    best = Some(k);
                    best_level = level;
                }
            }
        }
        let mut labels = vec![Label::Negative; classes];
        let (mut hd, mut od) = (None, None);
        if let Some(k) = best {
            let d = scene.interactions[k];
            for c in 0..classes {
                let same_pair = flagged.iter().any(|&j| {
                    let g = scene.interactions[j];
                    g.verb_id == c && g.human_idx == d.human_idx && g.object_idx == d.object_idx
                });
                let any = flagged.iter().any(|&j| scene.interactions[j].verb_id == c);
                labels[c] = if same_pair {
                    Label::Positive
                } else if any {
                    Label::Ignored
                } else {
                    Label::Negative
                };
            }
            let enc = |t: &BBox| {
                [
                    (t.cx() - ab.cx()) / ab.w(),
                    (t.cy() - ab.cy()) / ab.h(),
                    (t.w() / ab.w()).ln(),
                    (t.h() / ab.h()).ln(),
                ]
            };
            hd = Some(enc(&scene.instances[d.human_idx].bbox));
            od = Some(enc(&scene.instances[d.object_idx.unwrap()].bbox));
        }
        out.push(RegionAssignment {
            anchor_index: a.index,
            matched_interaction: best,
            class_targets: labels,
            human_deltas: hd,
            object_deltas: od,
        });
    }
    out
}

/// Crowded random scene: overlapping people and objects, repeated pairs,
/// duplicated boxes for exact level ties, coordinates on a coarse lattice so
/// threshold equalities occur.
pub fn crowded_scene(rng: &mut ChaCha8Rng, id: u64, cats: &Categories, size: f64) -> GtScene {
    let lattice = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| (rng.gen_range(lo..hi) / 4.0).round() * 4.0;
    let mut instances = Vec::new();
    let humans = rng.gen_range(1..=4);
    let objects = rng.gen_range(1..=5);
    for i in 0..humans + objects {
        if i > 0 && rng.gen_bool(0.15) {
            let prev: GtInstance = instances[rng.gen_range(0..i)];
            let class_id = if i < humans { 0 } else { rng.gen_range(1..cats.object_classes) };
            instances.push(GtInstance { bbox: prev.bbox, class_id });
            continue;
        }
        let w = lattice(rng, 16.0, size * 0.5);
        let h = lattice(rng, 16.0, size * 0.5);
        let x1 = lattice(rng, 0.0, size - w);
        let y1 = lattice(rng, 0.0, size - h);
        let class_id = if i < humans { 0 } else { rng.gen_range(1..cats.object_classes) };
        instances.push(GtInstance {
            bbox: BBox::from_corners(x1, y1, x1 + w, y1 + h).unwrap(),
            class_id,
        });
    }
    let mut interactions = Vec::new();
    for _ in 0..rng.gen_range(1..=8) {
        let human_idx = rng.gen_range(0..humans);
        if cats.no_object_verbs > 0 && rng.gen_bool(0.15) {
            interactions.push(GtInteraction {
                human_idx,
                object_idx: None,
                verb_id: cats.with_object_verbs + rng.gen_range(0..cats.no_object_verbs),
            });
            continue;
        }
        // humans can be objects too
        let object_idx = loop {
            let o = rng.gen_range(0..instances.len());
            if o != human_idx {
                break o;
            }
        };
        let verb_id = rng.gen_range(0..cats.with_object_verbs);
        interactions.push(GtInteraction { human_idx, object_idx: Some(object_idx), verb_id });
        if rng.gen_bool(0.3) {
            interactions.push(GtInteraction {
                human_idx,
                object_idx: Some(object_idx),
                verb_id: rng.gen_range(0..cats.with_object_verbs),
            });
        }
    }
    GtScene { scene_id: id, width: size, height: size, instances, interactions }
}

/// Step-by-step voting written from the definitions: human match, Gaussian
/// object match, weighted scores, per-pair sums, final scores. Pairs map to
/// per-verb fused scores.
pub fn brute_fuse(
    anchors: &[Anchor],
    dets: &[InstanceDetection],
    regions: &[RegionPrediction],
    cfg: &VotingConfig,
) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut fused: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for r in regions {
        let a = &anchors[r.anchor_index].bbox;
        let mut h = None;
        let mut best = f64::NEG_INFINITY;
        for (i, d) in dets.iter().enumerate() {
            if d.class_id == 0 && naive_cov(a, &d.bbox) > cfg.t_h {
                let v = naive_iou(a, &d.bbox);
                if v > best {
                    best = v;
                    h = Some(i);
                }
            }
        }
        let Some(h) = h else { continue };
        let hd = &dets[h];
        let mu = (
            (r.object_box.cx() - r.human_box.cx()) / a.w(),
            (r.object_box.cy() - r.human_box.cy()) / a.h(),
        );
        let mut o = None;
        let mut best_p = f64::NEG_INFINITY;
        for (j, d) in dets.iter().enumerate() {
            if j == h || naive_cov(a, &d.bbox) <= cfg.t_o {
                continue;
            }
            let v = ((d.bbox.cx() - hd.bbox.cx()) / a.w(), (d.bbox.cy() - hd.bbox.cy()) / a.h());
            let dist2 = (v.0 - mu.0).powi(2) + (v.1 - mu.1).powi(2);
            let p = (-dist2 / (2.0 * cfg.sigma * cfg.sigma)).exp();
            if p > best_p {
                best_p = p;
                o = Some(j);
            }
        }
        let Some(o) = o else { continue };
        let e = fused.entry((h, o)).or_insert_with(|| vec![0.0; r.inter_scores.len()]);
        for (acc, s) in e.iter_mut().zip(&r.inter_scores) {
            *acc += s * best_p;
        }
    }
    fused
}

pub fn brute_triplets(
    fused: &BTreeMap<(usize, usize), Vec<f64>>,
    dets: &[InstanceDetection],
    cats: &Categories,
    cfg: &VotingConfig,
) -> Vec<TripletScore> {
    let mut out = Vec::new();
    for (&(h, o), f) in fused {
        for c in 0..cats.with_object_verbs {
            let s = dets[h].score * dets[o].score * (dets[h].action_scores[c] + dets[o].action_scores[c]) * f[c];
            if s >= cfg.score_floor && s > 0.0 {
                out.push(TripletScore { human_det: h, object_det: Some(o), verb_id: c, score: s });
            }
        }
    }
    for (h, d) in dets.iter().enumerate() {
        if d.class_id != 0 {
            continue;
        }
        for c in cats.with_object_verbs..cats.total_verbs() {
            let s = d.score * d.action_scores[c];
            if s >= cfg.score_floor && s > 0.0 {
                out.push(TripletScore { human_det: h, object_det: None, verb_id: c, score: s });
            }
        }
    }
    out
}

/// Random detections and regions over a crowded scene.
pub fn random_predictions(
    rng: &mut ChaCha8Rng,
    scene: &GtScene,
    anchors: &[Anchor],
    cats: &Categories,
    n_regions: usize,
) -> (Vec<InstanceDetection>, Vec<RegionPrediction>) {
    let dets: Vec<InstanceDetection> = scene
        .instances
        .iter()
        .map(|g| {
            let len = if g.class_id == 0 { cats.human_actions() } else { cats.object_actions() };
            InstanceDetection {
                bbox: g.bbox,
                class_id: g.class_id,
                score: rng.gen_range(0.0..1.0),
                action_scores: (0..len).map(|_| rng.gen_range(0.0..1.0)).collect(),
            }
        })
        .collect();
    let jitter = |rng: &mut ChaCha8Rng, b: &BBox| {
        BBox::new(
            b.cx() + rng.gen_range(-8.0..8.0),
            b.cy() + rng.gen_range(-8.0..8.0),
            b.w() * rng.gen_range(0.8..1.2),
            b.h() * rng.gen_range(0.8..1.2),
        )
        .unwrap()
    };
    // anchors that see some instance, so most regions reach the matching steps
    let near: Vec<usize> = anchors
        .iter()
        .filter(|a| scene.instances.iter().any(|g| naive_cov(&a.bbox, &g.bbox) > 0.2))
        .map(|a| a.index)
        .collect();
    let regions = (0..n_regions)
        .map(|_| {
            let h = &scene.instances[rng.gen_range(0..scene.instances.len())].bbox;
            let o = &scene.instances[rng.gen_range(0..scene.instances.len())].bbox;
            RegionPrediction {
                anchor_index: if near.is_empty() {
                    rng.gen_range(0..anchors.len())
                } else {
                    near[rng.gen_range(0..near.len())]
                },
                inter_scores: (0..cats.object_actions()).map(|_| rng.gen_range(0.0..1.0)).collect(),
                human_box: jitter(rng, h),
                object_box: jitter(rng, o),
            }
        })
        .collect();
    (dets, regions)
}

/// Random labels: background rows all negative, foreground rows mixed with at
/// least one positive.
pub fn random_targets(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> ClassTargets {
    let mut labels = Array2::from_elem((rows, classes), Label::Negative);
    let mut fg = vec![false; rows];
    for i in 0..rows {
        if rng.gen_bool(0.5) {
            fg[i] = true;
            for c in 0..classes {
                labels[[i, c]] = match rng.gen_range(0..4) {
                    0 => Label::Positive,
                    1 => Label::Ignored,
                    _ => Label::Negative,
                };
            }
            labels[[i, rng.gen_range(0..classes)]] = Label::Positive;
        }
    }
    ClassTargets::new(labels, fg).unwrap()
}

pub fn logits(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, classes), |_| rng.gen_range(-3.0..3.0))
}
