//! File-level commands: each reads inputs from disk, writes outputs plus a
//! `run_record.json`, and is a pure function of its inputs and seeds.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{dataset_stats, split_dataset, tile_scene, SceneTile, SplitMode, TileManifest};
use crate::detect::{dark_spot_mask, import_prediction_mask, DetectorParams};
use crate::error::{Error, Result};
use crate::evaluate::{
    evaluate_scene, write_report, BinningSpec, EvalConfig, EvaluationReport, EVALUATION_FILE,
};
use crate::gmf::InversionLut;
use crate::raster::{
    raster_paths, read_json, read_mask, read_raster, write_json, write_mask, write_raster_tagged,
};
use crate::simulate::{files, gen_dataset, DatasetConfig, Manifest, MANIFEST_FILE, SCENES_DIR};
use crate::wind::{retrieve_wind, RetrievalSummary};

pub const RUN_RECORD: &str = "run_record.json";
pub const PRED_MASK: &str = "pred_mask";
pub const WIND_SPEED: &str = "wind_speed";
pub const TILES_FILE: &str = "tiles.json";
pub const STATS_JSON: &str = "stats.json";
pub const STATS_CSV: &str = "stats.csv";
const RETRIEVAL_FILE: &str = "retrieval.json";

/// Machine-readable trace of one command. Thread count is deliberately
/// absent so records match across `--threads` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub tool_version: String,
    pub format_version: u32,
    pub inputs: serde_json::Value,
    pub seed: Option<u64>,
}

impl RunRecord {
    fn write(command: &str, inputs: serde_json::Value, seed: Option<u64>, out: &Path) -> Result<()> {
        let rec = RunRecord {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            format_version: crate::raster::FORMAT_VERSION,
            inputs,
            seed,
        };
        write_json(&rec, &out.join(RUN_RECORD))
    }
}

/// One scene inside a dataset root: its id and directory relative to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneRef {
    pub scene_id: String,
    pub rel: PathBuf,
}

fn exists(stem: &Path) -> bool {
    let (json, _) = raster_paths(stem);
    json.exists()
}

/// A dataset root (with `manifest.json`) lists its scenes; a bare scene
/// directory (with `sigma0`) is a one-scene set rooted at itself.
pub fn resolve_scenes(root: &Path) -> Result<Vec<SceneRef>> {
    if root.join(MANIFEST_FILE).exists() {
        let m = Manifest::read(root)?;
        return Ok(m
            .scenes
            .iter()
            .map(|s| SceneRef {
                scene_id: s.scene_id.clone(),
                rel: Path::new(SCENES_DIR).join(&s.scene_id),
            })
            .collect());
    }
    let sigma0 = root.join(files::SIGMA0);
    if exists(&sigma0) {
        let (_, meta) = read_raster(&sigma0)?;
        return Ok(vec![SceneRef {
            scene_id: meta.scene_id,
            rel: PathBuf::new(),
        }]);
    }
    Err(Error::Input(format!(
        "{} holds neither {MANIFEST_FILE} nor a {} raster",
        root.display(),
        files::SIGMA0
    )))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn path_str(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn run_simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<Manifest> {
    let cfg = DatasetConfig::from_path(config)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let manifest = gen_dataset(&cfg, seed, out)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    RunRecord::write(
        "simulate",
        serde_json::json!({ "config": path_str(config), "resolved_config": cfg }),
        Some(seed),
        out,
    )?;
    Ok(manifest)
}

pub fn run_wind(scene_root: &Path, out: &Path) -> Result<RetrievalSummary> {
    let scenes = resolve_scenes(scene_root)?;
    let lut = InversionLut::default_cmod5n();
    let parts = crate::par::try_map_range(scenes.len(), |i| -> Result<RetrievalSummary> {
        let s = &scenes[i];
        let src = scene_root.join(&s.rel);
        let dst = out.join(&s.rel);
        mkdir(&dst)?;
        let (sigma0, meta) = read_raster(&src.join(files::SIGMA0))?;
        let (direction, _) = read_raster(&src.join(files::WIND_DIRECTION))?;
        let (field, summary) = retrieve_wind(&sigma0, &direction, &meta, lut)?;
        write_raster_tagged(&field.speed, &meta, &dst.join(WIND_SPEED), Some("wind_speed"))?;
        write_raster_tagged(
            &field.direction,
            &meta,
            &dst.join(files::WIND_DIRECTION),
            Some("wind_direction"),
        )?;
        write_json(&summary, &dst.join(RETRIEVAL_FILE))?;
        Ok(summary)
    })?;
    let mut total = RetrievalSummary::default();
    for p in parts {
        total.pixels += p.pixels;
        total.clamped_low += p.clamped_low;
        total.clamped_high += p.clamped_high;
        total.nodata += p.nodata;
    }
    mkdir(out)?;
    write_json(&total, &out.join(RETRIEVAL_FILE))?;
    RunRecord::write("wind", serde_json::json!({ "scene": path_str(scene_root) }), None, out)?;
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct DetectArgs {
    pub scene: PathBuf,
    pub params: Option<PathBuf>,
    pub out: PathBuf,
}

/// Runs the dark-spot detector; returns the number of flagged pixels.
pub fn run_detect(args: &DetectArgs) -> Result<u64> {
    let params: DetectorParams = match &args.params {
        Some(p) => read_json(p).map_err(|e| Error::Config(e.to_string()))?,
        None => DetectorParams::default(),
    };
    params.validate()?;
    let scenes = resolve_scenes(&args.scene)?;
    let counts = crate::par::try_map_range(scenes.len(), |i| -> Result<u64> {
        let s = &scenes[i];
        let dst = args.out.join(&s.rel);
        mkdir(&dst)?;
        let (sigma0, meta) = read_raster(&args.scene.join(&s.rel).join(files::SIGMA0))?;
        let mask = dark_spot_mask(&sigma0, &params).map_err(|e| e.in_scene(&s.scene_id))?;
        write_mask(&mask, &meta, &dst.join(PRED_MASK))?;
        Ok(mask.count() as u64)
    })?;
    mkdir(&args.out)?;
    RunRecord::write(
        "detect",
        serde_json::json!({ "scene": path_str(&args.scene), "params": params }),
        None,
        &args.out,
    )?;
    Ok(counts.iter().sum())
}

#[derive(Debug, Clone)]
pub struct ImportArgs {
    /// A mask raster for a single scene, or a directory laid out like
    /// detector output for a dataset.
    pub mask: PathBuf,
    pub scene: PathBuf,
    pub out: PathBuf,
}

pub fn run_import(args: &ImportArgs) -> Result<u64> {
    let scenes = resolve_scenes(&args.scene)?;
    let dataset = args.scene.join(MANIFEST_FILE).exists();
    let counts = crate::par::try_map_range(scenes.len(), |i| -> Result<u64> {
        let s = &scenes[i];
        let (sigma0, meta) = read_raster(&args.scene.join(&s.rel).join(files::SIGMA0))?;
        let src = if dataset {
            args.mask.join(&s.rel).join(PRED_MASK)
        } else {
            args.mask.clone()
        };
        let mask = import_prediction_mask(&src, sigma0.dims()).map_err(|e| e.in_scene(&s.scene_id))?;
        let dst = args.out.join(&s.rel);
        mkdir(&dst)?;
        write_mask(&mask, &meta, &dst.join(PRED_MASK))?;
        Ok(mask.count() as u64)
    })?;
    mkdir(&args.out)?;
    RunRecord::write(
        "detect-import",
        serde_json::json!({ "scene": path_str(&args.scene), "mask": path_str(&args.mask) }),
        None,
        &args.out,
    )?;
    Ok(counts.iter().sum())
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub gt: PathBuf,
    pub pred: PathBuf,
    /// Retrieved wind output; falls back to `wind_speed_truth` if a scene
    /// has no retrieved field.
    pub wind: PathBuf,
    pub bins: Option<PathBuf>,
    pub config: EvalConfig,
    pub out: PathBuf,
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<EvaluationReport> {
    let bins: BinningSpec = match &args.bins {
        Some(p) => read_json(p).map_err(|e| Error::Config(e.to_string()))?,
        None => BinningSpec::default(),
    };
    bins.validate()?;
    let scenes = resolve_scenes(&args.gt)?;
    let evals = crate::par::try_map_range(scenes.len(), |i| {
        let s = &scenes[i];
        let (gt, _) = read_mask(&args.gt.join(&s.rel).join(files::GT_MASK))?;
        let (pred, _) = read_mask(&args.pred.join(&s.rel).join(PRED_MASK))?;
        let wind_dir = args.wind.join(&s.rel);
        let wind_path = if exists(&wind_dir.join(WIND_SPEED)) {
            wind_dir.join(WIND_SPEED)
        } else {
            wind_dir.join(files::WIND_SPEED_TRUTH)
        };
        let (speed, _) = read_raster(&wind_path)?;
        evaluate_scene(&s.scene_id, &gt, &pred, &speed, &bins, &args.config)
    })?;
    let report = EvaluationReport::aggregate(&evals, &bins, args.config.min_intersection_px.max(1));
    mkdir(&args.out)?;
    write_json(&report, &args.out.join(EVALUATION_FILE))?;
    write_report(&report, &args.out)?;
    RunRecord::write(
        "evaluate",
        serde_json::json!({
            "gt": path_str(&args.gt),
            "pred": path_str(&args.pred),
            "wind": path_str(&args.wind),
            "bins": bins,
            "config": args.config,
        }),
        None,
        &args.out,
    )?;
    Ok(report)
}

pub fn run_report(eval_dir: &Path, out: &Path) -> Result<EvaluationReport> {
    let report: EvaluationReport = read_json(&eval_dir.join(EVALUATION_FILE))?;
    write_report(&report, out)?;
    RunRecord::write("report", serde_json::json!({ "eval": path_str(eval_dir) }), None, out)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TileArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub ratios: (f64, f64),
    pub seed: u64,
    pub size: usize,
    pub stride: usize,
    pub mode: SplitMode,
}

pub fn run_tile(args: &TileArgs) -> Result<TileManifest> {
    let manifest = Manifest::read(&args.input)?;
    let per_scene = crate::par::try_map_range(manifest.scenes.len(), |i| -> Result<Vec<SceneTile>> {
        let s = &manifest.scenes[i];
        let (gt, _) = read_mask(&args.input.join(&s.paths.gt_mask))?;
        let (w, h) = gt.dims();
        let tiles = tile_scene(w, h, args.size, args.stride).map_err(|e| e.in_scene(&s.scene_id))?;
        Ok(tiles
            .into_iter()
            .map(|t| {
                let mut n = 0u64;
                for r in t.row0..t.row0 + t.size {
                    for c in t.col0..t.col0 + t.size {
                        n += gt.get(r, c) as u64;
                    }
                }
                SceneTile {
                    scene_id: s.scene_id.clone(),
                    test: s.test,
                    tile: t,
                    slick_pixel_count: n,
                }
            })
            .collect())
    })?;
    let tiles: Vec<SceneTile> = per_scene.into_iter().flatten().collect();
    let tm = split_dataset(&tiles, args.ratios, args.seed, args.mode)?;
    let stats = dataset_stats(&tm);
    mkdir(&args.out)?;
    write_json(&tm, &args.out.join(TILES_FILE))?;
    write_json(&stats, &args.out.join(STATS_JSON))?;
    let csv_path = args.out.join(STATS_CSV);
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::Internal(format!("{}: {e}", csv_path.display())))?;
    for row in &stats {
        w.serialize(row)
            .map_err(|e| Error::Internal(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    RunRecord::write(
        "tile",
        serde_json::json!({
            "in": path_str(&args.input),
            "ratios": args.ratios,
            "size": args.size,
            "stride": args.stride,
            "mode": args.mode,
        }),
        Some(args.seed),
        &args.out,
    )?;
    Ok(tm)
}
