use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vsqkit::io::{evaluate_manifest, load_scenes, read_json, report_json, track_manifest, write_json, write_synth_dataset, DatasetManifest};
use vsqkit::synth::Perturbation;
use vsqkit::tracker::TrackerConfig;
use vsqkit::trajectory::{apply_embodiment, densify_path, EmbodimentConfig, Waypose};
use vsqkit::tube::IouMode;
use vsqkit::vsq::{EmptyPolicy, EvalConfig, Pooling, WindowScoring, DEFAULT_STRIDE};
use vsqkit::Error;

/// Video segmentation quality evaluation and geometric self-prompt tracking.
#[derive(Parser)]
#[command(name = "vsqkit", version)]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against ground truth.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        /// Window lengths.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,15")]
        k: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_STRIDE)]
        stride: usize,
        /// Average per-video scores instead of pooling counts.
        #[arg(long)]
        per_video: bool,
        /// Leave videos with nothing to find and nothing predicted out of
        /// per-video averages.
        #[arg(long)]
        skip_empty: bool,
        /// Matched pairs need tube IoU above this to count as true positives.
        #[arg(long, default_value_t = 0.0)]
        tp_threshold: f64,
        #[arg(long)]
        frame_averaged_iou: bool,
        /// Link per-frame predictions by mask overlap before scoring.
        #[arg(long)]
        link_frames: bool,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relabel per-frame segmentations with persistent track ids.
    Track {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        visibility_tol: f64,
        /// Consecutive missed frames before a track retires; 0 never retires.
        #[arg(long, default_value_t = 10)]
        miss_budget: u32,
        #[arg(long, default_value_t = 16)]
        min_area: u64,
        /// Output directory for predictions and a manifest pointing at them.
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate a waypoint path into bounded steps.
    Densify {
        #[arg(long)]
        waypoints: PathBuf,
        #[arg(long)]
        embodiment: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render synthetic box scenes into a dataset.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_perturbation)]
        perturb: Option<Perturbation>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_perturbation(s: &str) -> Result<Perturbation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> vsqkit::Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    }
    match cli.command {
        Command::Evaluate {
            manifest,
            k,
            stride,
            per_video,
            skip_empty,
            tp_threshold,
            frame_averaged_iou,
            link_frames,
            out,
        } => {
            let cfg = EvalConfig {
                k_set: k,
                stride,
                pooling: if per_video { Pooling::PerVideo } else { Pooling::Micro },
                empty: if skip_empty { EmptyPolicy::Skip } else { EmptyPolicy::Perfect },
                scoring: WindowScoring {
                    tp_threshold,
                    iou_mode: if frame_averaged_iou { IouMode::FrameAveraged } else { IouMode::Volumetric },
                },
                link_predictions: link_frames,
            };
            cfg.validate()?;
            let m = DatasetManifest::load(&manifest)?;
            let report = report_json(&evaluate_manifest(&m, &cfg)?);
            match out {
                Some(path) => std::fs::write(&path, report).map_err(|e| Error::Io { path, source: e })?,
                None => print!("{report}"),
            }
        }
        Command::Track {
            manifest,
            visibility_tol,
            miss_budget,
            min_area,
            out,
        } => {
            let cfg = TrackerConfig {
                visibility_tol,
                miss_budget: if miss_budget == 0 { u32::MAX } else { miss_budget },
                min_segment_area: min_area,
            };
            let m = DatasetManifest::load(&manifest)?;
            let path = track_manifest(&m, &cfg, &out)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Densify {
            waypoints,
            embodiment,
            out,
        } => {
            let points: Vec<Waypose> = read_json(&waypoints)?;
            let mut traj = densify_path(&points)?;
            if let Some(path) = embodiment {
                let cfg: EmbodimentConfig = read_json(&path)?;
                traj = apply_embodiment(&traj, &cfg)?;
            }
            write_json(&out, &traj)?;
            eprintln!("{} poses", traj.len());
        }
        Command::Synth {
            spec,
            out,
            perturb,
            seed,
        } => {
            let scenes = load_scenes(&spec)?;
            let path = write_synth_dataset(&scenes, &out, perturb, seed)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
