//! Parameter sweeps over the synthetic benchmark.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::RegionsRecord;
use super::pipeline::run_pipeline;
use super::rng::{stream, TAG_LOGITS};
use super::synth::{gen_regions, gen_synth, SynthData};
use crate::assignment::{assign_regions, GtScene, Label, Thresholds};
use crate::error::{Error, Result};
use crate::geometry::{generate_anchors, Anchor};
use crate::losses::{classification_loss, ClassTargets, LossConfig, LossVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    NmsIou,
    Sigma,
    Thresholds,
    LossVariant,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "nms-iou" => Ok(Axis::NmsIou),
            "sigma" => Ok(Axis::Sigma),
            "thresholds" => Ok(Axis::Thresholds),
            "loss-variant" => Ok(Axis::LossVariant),
            _ => Err(Error::Config(format!(
                "unknown axis `{s}` (expected nms-iou, sigma, thresholds or loss-variant)"
            ))),
        }
    }
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    /// `1.0` disables region suppression.
    NmsIou(f64),
    Sigma(f64),
    Thresholds(Thresholds),
    LossVariant(LossVariant),
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::NmsIou(t) if *t >= 1.0 => write!(f, "nms_iou=off"),
            Setting::NmsIou(t) => write!(f, "nms_iou={t}"),
            Setting::Sigma(s) => write!(f, "sigma={s}"),
            Setting::Thresholds(t) => write!(f, "t_h={},t_o={},t_u={}", t.t_h, t.t_o, t.t_u),
            Setting::LossVariant(v) => write!(f, "loss={}", v.name()),
        }
    }
}

impl Axis {
    pub fn default_settings(self) -> Vec<Setting> {
        match self {
            Axis::NmsIou => [1.0, 0.9, 0.7, 0.5].into_iter().map(Setting::NmsIou).collect(),
            Axis::Sigma => [0.5, 0.7, 0.9, 1.1, 1.3].into_iter().map(Setting::Sigma).collect(),
            Axis::Thresholds => [(0.5, 0.5, 0.5), (0.25, 0.25, 0.5), (0.25, 0.25, 0.25)]
                .into_iter()
                .map(|(t_h, t_o, t_u)| Setting::Thresholds(Thresholds { t_u, t_h, t_o }))
                .collect(),
            Axis::LossVariant => LossVariant::ALL.into_iter().map(Setting::LossVariant).collect(),
        }
    }

    /// Parses one value of this axis. Thresholds are written `t_h:t_o:t_u`.
    pub fn parse_setting(self, s: &str) -> Result<Setting> {
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{v}` is not a number")))
        };
        match self {
            Axis::NmsIou => Ok(Setting::NmsIou(num(s)?)),
            Axis::Sigma => Ok(Setting::Sigma(num(s)?)),
            Axis::Thresholds => {
                let parts: Vec<&str> = s.split(':').collect();
                let [h, o, u] = parts[..] else {
                    return Err(Error::Config(format!("thresholds `{s}` must be t_h:t_o:t_u")));
                };
                Ok(Setting::Thresholds(Thresholds {
                    t_u: num(u)?,
                    t_h: num(h)?,
                    t_o: num(o)?,
                }))
            }
            Axis::LossVariant => LossVariant::ALL
                .into_iter()
                .find(|v| v.name() == s.trim())
                .map(Setting::LossVariant)
                .ok_or_else(|| Error::Config(format!("unknown loss variant `{s}`"))),
        }
    }
}

/// Classification-loss statistics on simulated logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub value: f64,
    /// Cells that receive a gradient.
    pub active_cells: usize,
    /// Gradient mass on background anchors.
    pub background_grad_l1: f64,
    /// Gradient mass on ignored cells.
    pub ignored_grad_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    /// Mean over seeds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_role: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub map_per_seed: Vec<f64>,
    /// Anchor-interaction pairs passing the region test, summed over seeds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flagged_pairs: Option<usize>,
    /// Regions matched to a human and an object, summed over seeds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions_matched: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossStats>,
}

/// Number of (anchor, with-object interaction) pairs flagged under `th`.
pub fn flagged_pairs(anchors: &[Anchor], scenes: &[GtScene], th: &Thresholds) -> usize {
    scenes
        .par_iter()
        .map(|s| {
            s.interactions
                .iter()
                .filter_map(|int| s.interaction_boxes(int))
                .map(|b| anchors.iter().filter(|a| b.flag(&a.bbox, th)).count())
                .sum::<usize>()
        })
        .sum()
}

fn regions_under(cfg: &RunConfig, data: &SynthData, anchors: &[Anchor], th: &Thresholds) -> Vec<RegionsRecord> {
    data.gt
        .par_iter()
        .map(|gt| RegionsRecord {
            scene_id: gt.scene_id,
            regions: gen_regions(&cfg.synth, gt, anchors, &cfg.categories, th).0,
        })
        .collect()
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-4, 1.0 - 1e-4);
    (p / (1.0 - p)).ln()
}

/// Loss of `variant` over every anchor of every scene. Anchors with a region
/// prediction use its scores as logits; all others draw background logits.
pub fn loss_stats(cfg: &RunConfig, data: &SynthData, anchors: &[Anchor], variant: LossVariant) -> Result<LossStats> {
    let classes = cfg.categories.object_actions();
    let loss_cfg = LossConfig { variant, ..cfg.loss };
    let per_scene: Vec<LossStats> = data
        .gt
        .par_iter()
        .zip(&data.regions)
        .map(|(gt, regions)| {
            let assignments = assign_regions(anchors, gt, &cfg.thresholds, classes)?;
            let targets = ClassTargets::from_assignments(&assignments, classes)?;
            let mut rng = stream(cfg.synth.seed, &[gt.scene_id, TAG_LOGITS]);
            let bg = Normal::new(-4.0, 1.0).expect("valid normal");
            let mut logits = Array2::from_shape_fn((anchors.len(), classes), |_| bg.sample(&mut rng));
            for r in &regions.regions {
                for (c, &s) in r.inter_scores.iter().enumerate() {
                    logits[[r.anchor_index, c]] = logit(s) + 1e-3 * rng.gen::<f64>();
                }
            }
            let lg = classification_loss(logits.view(), &targets, &loss_cfg)?;
            let mut stats = LossStats {
                value: lg.value,
                active_cells: 0,
                background_grad_l1: 0.0,
                ignored_grad_l1: 0.0,
            };
            for ((i, c), &g) in lg.grad.indexed_iter() {
                if g != 0.0 {
                    stats.active_cells += 1;
                }
                if !targets.foreground[i] {
                    stats.background_grad_l1 += g.abs();
                } else if targets.labels[[i, c]] == Label::Ignored {
                    stats.ignored_grad_l1 += g.abs();
                }
            }
            Ok(stats)
        })
        .collect::<Result<_>>()?;
    Ok(per_scene.iter().fold(
        LossStats {
            value: 0.0,
            active_cells: 0,
            background_grad_l1: 0.0,
            ignored_grad_l1: 0.0,
        },
        |acc, s| LossStats {
            value: acc.value + s.value,
            active_cells: acc.active_cells + s.active_cells,
            background_grad_l1: acc.background_grad_l1 + s.background_grad_l1,
            ignored_grad_l1: acc.ignored_grad_l1 + s.ignored_grad_l1,
        },
    ))
}

/// Runs the full pipeline once per setting and seed. mAP is averaged over
/// `seeds`; loss statistics use the first seed only.
pub fn ablate(cfg: &RunConfig, settings: &[Setting], seeds: &[u64]) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let anchors = generate_anchors(&cfg.anchors)?;
    let mut datasets = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut run = cfg.clone();
        run.synth.seed = seed;
        let data = gen_synth(&run.synth, &run.anchors, &run.categories, &run.thresholds)?;
        datasets.push((run, data));
    }

    let mut rows = Vec::with_capacity(settings.len());
    for setting in settings {
        let mut row = AblationRow {
            setting: setting.to_string(),
            map_role: None,
            map_per_seed: Vec::new(),
            flagged_pairs: None,
            regions_matched: None,
            loss: None,
        };
        if let Setting::LossVariant(v) = setting {
            let (run, data) = &datasets[0];
            row.loss = Some(loss_stats(run, data, &anchors, *v)?);
            rows.push(row);
            continue;
        }
        let mut matched = 0;
        let mut flagged = 0;
        for (run, data) in &datasets {
            let mut run = run.clone();
            let mut regions = None;
            match *setting {
                Setting::NmsIou(t) => run.voting.region_nms_iou = Some(t),
                Setting::Sigma(s) => run.voting.sigma = s,
                Setting::Thresholds(th) => {
                    run.thresholds = th;
                    run.voting.t_h = th.t_h;
                    run.voting.t_o = th.t_o;
                    run.validate()?;
                    regions = Some(regions_under(&run, data, &anchors, &th));
                    flagged += flagged_pairs(&anchors, &data.gt, &th);
                }
                Setting::LossVariant(_) => unreachable!(),
            }
            run.validate()?;
            let out = run_pipeline(
                &anchors,
                &data.gt,
                &data.detections,
                regions.as_deref().unwrap_or(&data.regions),
                &run.categories,
                &run.voting,
                &run.eval,
            )?;
            matched += out.regions_matched;
            row.map_per_seed.push(out.report.map_role);
        }
        row.map_role = Some(row.map_per_seed.iter().sum::<f64>() / row.map_per_seed.len() as f64);
        row.regions_matched = Some(matched);
        if matches!(setting, Setting::Thresholds(_)) {
            row.flagged_pairs = Some(flagged);
        }
        rows.push(row);
    }
    Ok(rows)
}
