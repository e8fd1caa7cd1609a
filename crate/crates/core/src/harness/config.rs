//! Run configuration: one TOML file mirroring [`RunConfig`], with dotted-path
//! overrides (`voting.sigma=0.7`) applied on top.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::synth::SynthConfig;
use crate::assignment::{Categories, Thresholds};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::geometry::AnchorConfig;
use crate::losses::LossConfig;
use crate::voting::VotingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub categories: Categories,
    pub thresholds: Thresholds,
    pub voting: VotingConfig,
    pub loss: LossConfig,
    pub anchors: AnchorConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.categories.validate()?;
        self.thresholds.validate()?;
        self.voting.validate()?;
        self.loss.validate()?;
        self.anchors.validate()?;
        self.eval.validate()?;
        self.synth.validate()
    }

    /// Defaults, overlaid with `file` (if any), then with each `key=value`
    /// override. Tables merge key by key; arrays and scalars replace.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root = defaults_table()?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let user: Table =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut root, user);
        }
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: RunConfig = Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn defaults_table() -> Result<Table> {
    match Value::try_from(RunConfig::default()) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => unreachable!("a struct serializes to a table"),
        Err(e) => Err(Error::Config(e.to_string())),
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses the right-hand side as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn apply_override(root: &mut Table, item: &str) -> Result<()> {
    let (path, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{item}` has an empty key")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = root;
    for k in parents {
        table = match table
            .entry(k.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
        {
            Value::Table(t) => t,
            _ => return Err(Error::Config(format!("override `{item}`: `{k}` is not a table"))),
        };
    }
    table.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LossVariant;

    #[test]
    fn defaults_carry_the_reference_hyperparameters() {
        let cfg = RunConfig::load(None, &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.thresholds, Thresholds::uniform(0.25));
        assert_eq!(cfg.voting.sigma, 0.9);
        assert_eq!((cfg.loss.alpha, cfg.loss.gamma), (0.25, 2.0));
    }

    #[test]
    fn partial_file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[voting]\nsigma = 0.5\n[synth]\nscore_noise = 0.2\n").unwrap();
        let cfg = RunConfig::load(
            Some(&p),
            &[
                "voting.region_nms_iou=0.7".into(),
                "loss.variant=focal".into(),
                "thresholds.t_u = 0.5".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.voting.sigma, 0.5);
        assert_eq!(cfg.voting.region_nms_iou, Some(0.7));
        assert_eq!(cfg.voting.t_h, 0.25);
        assert_eq!(cfg.synth.score_noise, 0.2);
        assert_eq!(cfg.loss.variant, LossVariant::Focal);
        assert_eq!(cfg.thresholds.t_u, 0.5);
    }

    #[test]
    fn errors_are_config_errors() {
        for bad in ["voting.nope=1", "voting.sigma=-1", "sigma", "voting.sigma.x=1", "thresholds.t_u=1.5"] {
            let err = RunConfig::load(None, &[bad.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err:?}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.voting.region_nms_iou = Some(0.5);
        let text = cfg.to_toml().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        assert_eq!(RunConfig::load(Some(&p), &[]).unwrap(), cfg);
    }
}
