//! Voting wall time against the number of matched regions.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::RegionsRecord;
use super::synth::gen_synth;
use crate::error::{Error, Result};
use crate::geometry::generate_anchors;
use crate::voting::vote_scene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scale: usize,
    pub regions: usize,
    pub matched: usize,
    /// Fastest of the repeats.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Least-squares slope of log time over log matched regions; `None` with
    /// fewer than two distinct scales.
    pub slope: Option<f64>,
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Times single-threaded voting over the synthetic scenes of `cfg.synth`
/// with every region repeated `scale` times. Repeats run round-robin over
/// scales so drift affects all scales alike.
pub fn bench_voting(cfg: &RunConfig, scales: &[usize], repeats: usize) -> Result<BenchReport> {
    cfg.validate()?;
    if scales.is_empty() || scales.contains(&0) || repeats == 0 {
        return Err(Error::Config("scales must be positive and repeats >= 1".into()));
    }
    let anchors = generate_anchors(&cfg.anchors)?;
    let data = gen_synth(&cfg.synth, &cfg.anchors, &cfg.categories, &cfg.thresholds)?;
    let inputs: Vec<Vec<RegionsRecord>> = scales
        .iter()
        .map(|&k| {
            data.regions
                .iter()
                .map(|r| RegionsRecord {
                    scene_id: r.scene_id,
                    regions: r.regions.iter().flat_map(|x| std::iter::repeat(x.clone()).take(k)).collect(),
                })
                .collect()
        })
        .collect();

    let mut rows: Vec<BenchRow> = scales
        .iter()
        .zip(&inputs)
        .map(|(&scale, regions)| BenchRow {
            scale,
            regions: regions.iter().map(|r| r.regions.len()).sum(),
            matched: 0,
            seconds: f64::INFINITY,
        })
        .collect();
    for _ in 0..repeats {
        for (row, regions) in rows.iter_mut().zip(&inputs) {
            let start = Instant::now();
            let mut matched = 0;
            for (d, r) in data.detections.iter().zip(regions) {
                let out = vote_scene(&anchors, &d.detections, &r.regions, &cfg.categories, &cfg.voting)?;
                matched += out.regions_matched;
                std::hint::black_box(&out.triplets);
            }
            row.seconds = row.seconds.min(start.elapsed().as_secs_f64());
            row.matched = matched;
        }
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.matched > 0 && r.seconds > 0.0)
        .map(|r| (r.matched as f64, r.seconds))
        .collect();
    Ok(BenchReport {
        slope: loglog_slope(&points),
        rows,
    })
}
