use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use hoi_vote::assignment::assign_regions;
use hoi_vote::geometry::generate_anchors;
use hoi_vote::harness::ablate::{ablate, Axis};
use hoi_vote::harness::bench::bench_voting;
use hoi_vote::harness::gradcheck::loss_check;
use hoi_vote::harness::io::{
    align_by_scene, read_gt, read_jsonl, write_jsonl, AssignmentRecord, DetectionsRecord, RegionsRecord,
    TripletsRecord,
};
use hoi_vote::harness::pipeline::{evaluate_records, infer};
use hoi_vote::harness::{gen_synth, RunConfig};
use hoi_vote::voting::human_location_map;
use hoi_vote::Error;

#[derive(Parser)]
#[command(name = "hoi-vote", version, about = "Interaction-region voting engine and synthetic benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set voting.sigma=0.7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground truth, detections and region predictions.
    GenSynth {
        #[arg(long)]
        seed: u64,
        /// Output directory; receives gt.jsonl, detections.jsonl, regions.jsonl.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scenes: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Dump interaction-region targets, one line per matched anchor.
    Assign {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Loss values and finite-difference gradient errors on random logits.
    LossCheck {
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Extra all-background rows.
        #[arg(long, default_value_t = 16)]
        background: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Vote region predictions into scored triplets.
    Infer {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-verb AP and role mAP.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one axis over the synthetic benchmark.
    Ablate {
        /// nms-iou, sigma, thresholds or loss-variant.
        #[arg(long)]
        axis: String,
        /// Comma-separated settings; thresholds as t_h:t_o:t_u.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Benchmark seeds; mAP is averaged over them.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Time voting against the number of matched regions.
    BenchVoting {
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8, 16])]
        scales: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Rasterize one person's object-location map as a text matrix.
    EmitDistribution {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        scene: u64,
        /// Index of the human detection within the scene.
        #[arg(long)]
        human: usize,
        /// Verb to plot; all verbs summed when absent.
        #[arg(long)]
        verb: Option<usize>,
        /// Cell size in pixels.
        #[arg(long, default_value_t = 4.0)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

fn print_json_lines<T: serde::Serialize>(rows: &[T], out: Option<&Path>) -> anyhow::Result<()> {
    if let Some(p) = out {
        write_jsonl(p, rows)?;
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for r in rows {
        writeln!(w, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynth {
            seed,
            out,
            scenes,
            common,
        } => {
            let mut cfg = common.load()?;
            cfg.synth.seed = seed;
            if let Some(n) = scenes {
                cfg.synth.scene_count = n;
            }
            let data = gen_synth(&cfg.synth, &cfg.anchors, &cfg.categories, &cfg.thresholds)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_jsonl(&out.join("gt.jsonl"), &data.gt)?;
            write_jsonl(&out.join("detections.jsonl"), &data.detections)?;
            write_jsonl(&out.join("regions.jsonl"), &data.regions)?;
            let regions: usize = data.regions.iter().map(|r| r.regions.len()).sum();
            println!(
                "{{\"scenes\":{},\"regions\":{regions},\"out\":{}}}",
                data.gt.len(),
                serde_json::to_string(&out)?
            );
        }
        Command::Assign { gt, out, common } => {
            let cfg = common.load()?;
            let anchors = generate_anchors(&cfg.anchors)?;
            let scenes = read_gt(&gt, &cfg.categories)?;
            let mut records = Vec::new();
            for s in &scenes {
                let assigned = assign_regions(&anchors, s, &cfg.thresholds, cfg.categories.object_actions())?;
                records.extend(assigned.iter().filter_map(|a| AssignmentRecord::from_assignment(s.scene_id, a)));
            }
            write_jsonl(&out, &records)?;
            println!("{{\"scenes\":{},\"matched_anchors\":{}}}", scenes.len(), records.len());
        }
        Command::LossCheck {
            assignments,
            seed,
            background,
            common,
        } => {
            let cfg = common.load()?;
            let records: Vec<AssignmentRecord> = read_jsonl(&assignments)?;
            print_json_lines(&loss_check(&records, &cfg.loss, seed, background)?, None)?;
        }
        Command::Infer {
            detections,
            regions,
            out,
            common,
        } => {
            let cfg = common.load()?;
            let anchors = generate_anchors(&cfg.anchors)?;
            let dets: Vec<DetectionsRecord> = read_jsonl(&detections)?;
            let regs: Vec<RegionsRecord> = read_jsonl(&regions)?;
            let scenes = infer(&anchors, &dets, regs, &cfg.categories, &cfg.voting)?;
            let records: Vec<TripletsRecord> = scenes.iter().map(|s| s.record.clone()).collect();
            write_jsonl(&out, &records)?;
            println!(
                "{{\"scenes\":{},\"triplets\":{},\"regions_matched\":{}}}",
                records.len(),
                records.iter().map(|r| r.triplets.len()).sum::<usize>(),
                scenes.iter().map(|s| s.regions_matched).sum::<usize>()
            );
        }
        Command::Eval {
            gt,
            detections,
            triplets,
            common,
        } => {
            let cfg = common.load()?;
            let scenes = read_gt(&gt, &cfg.categories)?;
            let report = evaluate_records(
                &scenes,
                read_jsonl(&detections)?,
                read_jsonl(&triplets)?,
                &cfg.categories,
                &cfg.eval,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Ablate {
            axis,
            values,
            seeds,
            out,
            common,
        } => {
            let axis: Axis = axis.parse()?;
            let cfg = common.load()?;
            let settings = if values.is_empty() {
                axis.default_settings()
            } else {
                values.iter().map(|v| axis.parse_setting(v)).collect::<Result<_, _>>()?
            };
            let seeds = if seeds.is_empty() { vec![cfg.synth.seed] } else { seeds };
            print_json_lines(&ablate(&cfg, &settings, &seeds)?, out.as_deref())?;
        }
        Command::BenchVoting {
            seed,
            scales,
            repeats,
            common,
        } => {
            let mut cfg = common.load()?;
            cfg.synth.seed = seed;
            let report = bench_voting(&cfg, &scales, repeats)?;
            print_json_lines(&report.rows, None)?;
            println!("{{\"slope\":{}}}", serde_json::to_string(&report.slope)?);
        }
        Command::EmitDistribution {
            detections,
            regions,
            scene,
            human,
            verb,
            step,
            out,
            common,
        } => {
            let cfg = common.load()?;
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::Config(format!("step must be positive, got {step}")).into());
            }
            let anchors = generate_anchors(&cfg.anchors)?;
            let dets = align_by_scene(
                &[scene],
                read_jsonl::<DetectionsRecord>(&detections)?
                    .into_iter()
                    .filter(|d| d.scene_id == scene)
                    .collect(),
                |r| r.scene_id,
                |scene_id| DetectionsRecord {
                    scene_id,
                    detections: Vec::new(),
                },
                "detections",
            )?;
            let regs: Vec<RegionsRecord> = read_jsonl(&regions)?;
            let regs: Vec<_> = regs.into_iter().filter(|r| r.scene_id == scene).collect();
            let regions_here = regs.first().map(|r| r.regions.as_slice()).unwrap_or(&[]);
            let rows = (cfg.anchors.image_height / step).ceil() as usize;
            let cols = (cfg.anchors.image_width / step).ceil() as usize;
            let map = human_location_map(
                &anchors,
                &dets[0].detections,
                regions_here,
                human,
                verb,
                &cfg.voting,
                (rows, cols, step),
            )?;
            let mut w = std::io::BufWriter::new(fs::File::create(&out)?);
            writeln!(w, "# scene={scene} human={human} verb={verb:?} step={step} rows={rows} cols={cols}")?;
            for row in &map {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
            w.flush()?;
            println!("{{\"rows\":{rows},\"cols\":{cols},\"out\":{}}}", serde_json::to_string(&out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
