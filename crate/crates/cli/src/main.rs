use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seaslick::evaluate::EvalConfig;
use seaslick::pipeline::{self, DetectArgs, EvaluateArgs, ImportArgs, SplitMode, TileArgs};
use seaslick::ErrorClass;

/// Synthetic SAR oil-slick scenes, wind retrieval, dark-spot detection and
/// wind/size binned evaluation.
#[derive(Parser, Debug)]
#[command(name = "seaslick", version, about)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Retrieve wind speed from σ0 for a scene or a whole dataset.
    Wind {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the dark-spot detector, or import external prediction masks.
    Detect(DetectCmd),
    /// Cut scenes into tiles and split them into train/val/test.
    Tile {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train and validation fractions, comma separated.
        #[arg(long, default_value = "0.85,0.15", value_parser = parse_ratios)]
        split: (f64, f64),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = pipeline::DEFAULT_TILE)]
        size: usize,
        /// Defaults to the tile size (no overlap).
        #[arg(long)]
        stride: Option<usize>,
        /// Shuffle individual crops instead of whole scenes.
        #[arg(long)]
        crop_split: bool,
    },
    /// Match predictions to ground truth and write binned reports.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        wind: PathBuf,
        /// JSON with `wind_edges` and `size_edges`; "inf" allowed.
        #[arg(long)]
        bins: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        min_intersection: usize,
        #[arg(long, default_value_t = 50.0)]
        radius_m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rewrite report files from a previous evaluation.
    Report {
        #[arg(long)]
        eval: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DetectCmd {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Detector parameters as JSON.
    #[arg(long, conflicts_with = "import")]
    params: Option<PathBuf>,
    /// Mask raster (single scene) or directory of masks (dataset) to import.
    #[arg(long)]
    import: Option<PathBuf>,
}

fn parse_ratios(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => {
            let a: f64 = a.parse().map_err(|e| format!("{a}: {e}"))?;
            let b: f64 = b.parse().map_err(|e| format!("{b}: {e}"))?;
            Ok((a, b))
        }
        _ => Err(format!("expected two comma-separated fractions, got {s:?}")),
    }
}

fn run(cli: Cli) -> seaslick::Result<()> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let m = pipeline::run_simulate(&config, &out, seed)?;
            log::info!(
                "{} scenes, slick pixel ratio {:.4}",
                m.scene_count,
                m.slick_pixel_ratio
            );
        }
        Command::Wind { scene, out } => {
            let s = pipeline::run_wind(&scene, &out)?;
            log::info!(
                "{} pixels, {} clamped low, {} clamped high, {} nodata",
                s.pixels,
                s.clamped_low,
                s.clamped_high,
                s.nodata
            );
        }
        Command::Detect(d) => {
            let n = match d.import {
                Some(mask) => pipeline::run_import(&ImportArgs {
                    mask,
                    scene: d.scene,
                    out: d.out,
                })?,
                None => pipeline::run_detect(&DetectArgs {
                    scene: d.scene,
                    params: d.params,
                    out: d.out,
                })?,
            };
            log::info!("{n} slick pixels predicted");
        }
        Command::Tile {
            input,
            out,
            split,
            seed,
            size,
            stride,
            crop_split,
        } => {
            let tm = pipeline::run_tile(&TileArgs {
                input,
                out,
                ratios: split,
                seed,
                size,
                stride: stride.unwrap_or(size),
                mode: if crop_split { SplitMode::Crop } else { SplitMode::Scene },
            })?;
            log::info!("{} tiles", tm.entries.len());
        }
        Command::Evaluate {
            gt,
            pred,
            wind,
            bins,
            min_intersection,
            radius_m,
            out,
        } => {
            let mut config = EvalConfig {
                min_intersection_px: min_intersection,
                ..EvalConfig::default()
            };
            config.neighborhood.radius_m = radius_m;
            let r = pipeline::run_evaluate(&EvaluateArgs {
                gt,
                pred,
                wind,
                bins,
                config,
                out,
            })?;
            log::info!(
                "detected {}, missed {}, false alarms {}",
                r.overall.detected,
                r.overall.missed,
                r.overall.fa
            );
        }
        Command::Report { eval, out } => {
            pipeline::run_report(&eval, &out)?;
        }
    }
    Ok(())
}

fn set_threads(threads: Option<usize>) -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = set_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Internal => 4,
            })
        }
    }
}
