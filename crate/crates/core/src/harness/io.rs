//! Line-delimited JSON records, one scene per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assignment::{GtScene, Label, RegionAssignment};
use crate::error::{Error, Result};
use crate::geometry::Delta4;
use crate::voting::{InstanceDetection, RegionPrediction, TripletScore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsRecord {
    pub scene_id: u64,
    pub detections: Vec<InstanceDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsRecord {
    pub scene_id: u64,
    pub regions: Vec<RegionPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletsRecord {
    pub scene_id: u64,
    pub triplets: Vec<TripletScore>,
}

/// One matched anchor of an assignment dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentRecord {
    pub scene_id: u64,
    pub anchor_index: usize,
    pub matched_interaction: usize,
    pub class_targets: Vec<Label>,
    pub human_deltas: Delta4,
    pub object_deltas: Delta4,
}

impl AssignmentRecord {
    /// `None` for background anchors.
    pub fn from_assignment(scene_id: u64, a: &RegionAssignment) -> Option<Self> {
        Some(Self {
            scene_id,
            anchor_index: a.anchor_index,
            matched_interaction: a.matched_interaction?,
            class_targets: a.class_targets.clone(),
            human_deltas: a.human_deltas?,
            object_deltas: a.object_deltas?,
        })
    }

    pub fn to_assignment(&self) -> RegionAssignment {
        RegionAssignment {
            anchor_index: self.anchor_index,
            matched_interaction: Some(self.matched_interaction),
            class_targets: self.class_targets.clone(),
            human_deltas: Some(self.human_deltas),
            object_deltas: Some(self.object_deltas),
        }
    }
}

/// Reads one record per non-blank line. Parse errors name the file and line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Input(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Input(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads ground truth, validates it and clips boxes to the image.
pub fn read_gt(path: &Path, cats: &crate::assignment::Categories) -> Result<Vec<GtScene>> {
    let mut scenes: Vec<GtScene> = read_jsonl(path)?;
    for s in &mut scenes {
        s.validate(cats)?;
        s.clip_to_image()?;
    }
    Ok(scenes)
}

/// Orders `records` to match the scene ids `ids`. Scenes missing from
/// `records` get `empty(id)`; unknown or repeated ids are input errors.
pub fn align_by_scene<T: Clone>(
    ids: &[u64],
    records: Vec<T>,
    id: impl Fn(&T) -> u64,
    empty: impl Fn(u64) -> T,
    what: &str,
) -> Result<Vec<T>> {
    use std::collections::HashMap;
    let pos: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut out: Vec<Option<T>> = vec![None; ids.len()];
    for r in records {
        let sid = id(&r);
        let i = *pos
            .get(&sid)
            .ok_or_else(|| Error::Input(format!("{what}: unexpected scene {sid}")))?;
        if out[i].is_some() {
            return Err(Error::Input(format!("{what}: scene {sid} appears twice")));
        }
        out[i] = Some(r);
    }
    Ok(out
        .into_iter()
        .zip(ids)
        .map(|(r, &s)| r.unwrap_or_else(|| empty(s)))
        .collect())
}
