//! Central finite-difference checks of analytic loss gradients.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::io::AssignmentRecord;
use super::rng::{stream, TAG_LOGITS};
use crate::assignment::{InstanceActionTargets, Label, Role};
use crate::error::{Error, Result};
use crate::losses::{
    classification_loss, instance_action_bce, smooth_l1, ClassTargets, LossConfig, LossGrad, LossVariant,
};

/// Finite-difference step and relative-error floor used by `loss-check`.
pub const FD_STEP: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-8;
/// Rows of an assignment dump used by `loss-check`; the check is quadratic in size.
pub const MAX_CHECK_ROWS: usize = 128;

/// Largest relative error between the analytic gradient of `f` at `x` and
/// central differences with step `h`, over every entry of `x`.
///
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn max_relative_error<F>(f: F, x: &Array2<f64>, h: f64, floor: f64) -> Result<f64>
where
    F: Fn(&Array2<f64>) -> Result<LossGrad>,
{
    let analytic = f(x)?.grad;
    let mut probe = x.clone();
    let mut worst = 0.0f64;
    for idx in ndarray::indices(x.dim()) {
        let (i, j) = idx;
        let x0 = probe[[i, j]];
        probe[[i, j]] = x0 + h;
        let up = f(&probe)?.value;
        probe[[i, j]] = x0 - h;
        let down = f(&probe)?.value;
        probe[[i, j]] = x0;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[[i, j]];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCheckRow {
    pub loss: String,
    pub value: f64,
    pub max_rel_err: f64,
}

/// Smooth-L1 residual kept away from the kink at `±beta`, where central
/// differences lose accuracy.
fn residual(rng: &mut impl Rng, beta: f64) -> f64 {
    loop {
        let r: f64 = rng.gen_range(-3.0 * beta..3.0 * beta);
        if (r.abs() - beta).abs() > 10.0 * FD_STEP {
            return r;
        }
    }
}

/// Loss values and worst finite-difference gradient error of every loss on
/// random logits. Uses the first [`MAX_CHECK_ROWS`] foreground records plus
/// `background` all-negative rows.
pub fn loss_check(
    records: &[AssignmentRecord],
    cfg: &LossConfig,
    seed: u64,
    background: usize,
) -> Result<Vec<LossCheckRow>> {
    cfg.validate()?;
    let fg = &records[..records.len().min(MAX_CHECK_ROWS)];
    let classes = match (fg.first(), background) {
        (Some(r), _) => r.class_targets.len(),
        (None, 0) => return Err(Error::Input("assignment dump is empty".into())),
        (None, _) => 1,
    };
    let rows = fg.len() + background;
    let mut labels = Array2::from_elem((rows, classes), Label::Negative);
    for (i, r) in fg.iter().enumerate() {
        if r.class_targets.len() != classes {
            return Err(Error::Input(format!(
                "scene {} anchor {}: {} class targets, expected {classes}",
                r.scene_id,
                r.anchor_index,
                r.class_targets.len()
            )));
        }
        for (c, &l) in r.class_targets.iter().enumerate() {
            labels[[i, c]] = l;
        }
    }
    let mut foreground = vec![true; fg.len()];
    foreground.resize(rows, false);
    let targets = ClassTargets::new(labels, foreground)?;

    let mut rng = stream(seed, &[TAG_LOGITS]);
    let logits = Array2::from_shape_fn((rows, classes), |_| rng.gen_range(-3.0..3.0));
    let mut out = Vec::new();
    for variant in LossVariant::ALL {
        let vcfg = LossConfig { variant, ..*cfg };
        let f = |x: &Array2<f64>| classification_loss(x.view(), &targets, &vcfg);
        out.push(LossCheckRow {
            loss: variant.name().to_string(),
            value: f(&logits)?.value,
            max_rel_err: max_relative_error(f, &logits, FD_STEP, FD_FLOOR)?,
        });
    }

    let beta = cfg.smooth_l1_beta;
    let deltas: Vec<[f64; 4]> = fg.iter().flat_map(|r| [r.human_deltas, r.object_deltas]).collect();
    let target = Array2::from_shape_fn((deltas.len(), 4), |(i, j)| deltas[i][j]);
    let pred = target.mapv(|t| t + residual(&mut rng, beta));
    let f = |x: &Array2<f64>| smooth_l1(x.view(), target.view(), beta);
    out.push(LossCheckRow {
        loss: "smooth-l1".into(),
        value: f(&pred)?.value,
        max_rel_err: max_relative_error(f, &pred, FD_STEP, FD_FLOOR)?,
    });

    // instance-action targets drawn at random on the same rows
    let actions: Vec<InstanceActionTargets> = (0..rows)
        .map(|i| InstanceActionTargets {
            anchor_index: i,
            role: if i % 3 == 2 { Role::None } else { Role::Human },
            action_targets: (0..classes).map(|_| rng.gen_bool(0.3)).collect(),
        })
        .collect();
    let f = |x: &Array2<f64>| instance_action_bce(x.view(), &actions);
    out.push(LossCheckRow {
        loss: "bce".into(),
        value: f(&logits)?.value,
        max_rel_err: max_relative_error(f, &logits, FD_STEP, FD_FLOOR)?,
    });
    Ok(out)
}
