//! Dataset mechanics (tiling, splits, statistics) and the end-to-end
//! commands behind the CLI.

mod run;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, streams};

pub use run::{
    run_detect, run_evaluate, run_import, run_report, run_simulate, run_tile, run_wind,
    DetectArgs, EvaluateArgs, ImportArgs, RunRecord, SceneRef, TileArgs, PRED_MASK, RUN_RECORD,
    TILES_FILE, STATS_CSV, STATS_JSON, WIND_SPEED,
};

pub const DEFAULT_TILE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
}

fn starts(dim: usize, size: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..).map(|k| k * stride).take_while(|s| s + size <= dim).collect();
    if let Some(&last) = out.last() {
        if last + size < dim {
            out.push(dim - size);
        }
    }
    out
}

/// Grid tiles of `size` at `stride`; the trailing row/column of tiles is
/// anchored to the far edge so full-size tiles cover every pixel.
pub fn tile_scene(width: usize, height: usize, size: usize, stride: usize) -> Result<Vec<Tile>> {
    if size == 0 || stride == 0 {
        return Err(Error::Config("tile size and stride must be > 0".into()));
    }
    if stride > size {
        return Err(Error::Config(format!(
            "stride {stride} larger than tile size {size} would leave gaps"
        )));
    }
    if width < size || height < size {
        return Err(Error::Input(format!(
            "scene {width}x{height} smaller than tile size {size}"
        )));
    }
    let rows = starts(height, size, stride);
    let cols = starts(width, size, stride);
    Ok(rows
        .iter()
        .flat_map(|&row0| cols.iter().map(move |&col0| Tile { row0, col0, size }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// All tiles of a scene share one split.
    #[default]
    Scene,
    /// Tiles are shuffled individually; tiles of one scene can leak across splits.
    Crop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub scene_id: String,
    pub tile_id: String,
    pub row0: usize,
    pub col0: usize,
    pub size: usize,
    pub split: Split,
    pub slick_pixel_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub dataset_seed: u64,
    pub ratios: (f64, f64),
    pub mode: SplitMode,
    pub entries: Vec<TileEntry>,
}

/// A tile before split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTile {
    pub scene_id: String,
    pub test: bool,
    pub tile: Tile,
    pub slick_pixel_count: u64,
}

/// Seeded train/val assignment. Test scenes bypass the shuffle.
pub fn split_dataset(
    tiles: &[SceneTile],
    ratios: (f64, f64),
    seed: u64,
    mode: SplitMode,
) -> Result<TileManifest> {
    if !(ratios.0 >= 0.0 && ratios.1 >= 0.0 && ((ratios.0 + ratios.1) - 1.0).abs() < 1e-9) {
        return Err(Error::Config(format!(
            "split ratios {}/{} must be non-negative and sum to 1",
            ratios.0, ratios.1
        )));
    }
    let mut units: Vec<String> = match mode {
        SplitMode::Scene => tiles
            .iter()
            .filter(|t| !t.test)
            .map(|t| t.scene_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        SplitMode::Crop => tiles
            .iter()
            .filter(|t| !t.test)
            .map(|t| tile_id(t))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let scenes: BTreeSet<&str> = tiles.iter().filter(|t| !t.test).map(|t| t.scene_id.as_str()).collect();
    if scenes.len() < 2 && mode == SplitMode::Scene {
        return Err(Error::Input(format!(
            "a two-way split needs at least 2 non-test scenes, found {}",
            scenes.len()
        )));
    }
    if units.len() < 2 {
        return Err(Error::Input(format!(
            "a two-way split needs at least 2 units, found {}",
            units.len()
        )));
    }
    units.shuffle(&mut seed::rng(seed, streams::SPLIT, 0));
    let n_train = (ratios.0 * units.len() as f64).round() as usize;
    let train: BTreeSet<&String> = units[..n_train].iter().collect();

    let entries = tiles
        .iter()
        .map(|t| {
            let id = tile_id(t);
            let key = match mode {
                SplitMode::Scene => &t.scene_id,
                SplitMode::Crop => &id,
            };
            let split = if t.test {
                Split::Test
            } else if train.contains(key) {
                Split::Train
            } else {
                Split::Val
            };
            TileEntry {
                scene_id: t.scene_id.clone(),
                tile_id: id,
                row0: t.tile.row0,
                col0: t.tile.col0,
                size: t.tile.size,
                split,
                slick_pixel_count: t.slick_pixel_count,
            }
        })
        .collect();
    Ok(TileManifest {
        dataset_seed: seed,
        ratios,
        mode,
        entries,
    })
}

pub fn tile_id(t: &SceneTile) -> String {
    format!("{}_r{:05}_c{:05}", t.scene_id, t.tile.row0, t.tile.col0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub collection: String,
    pub crops: u64,
    pub slick_pixels: u64,
    pub sea_pixels: u64,
    /// Slick pixels over all pixels in the collection.
    pub slick_ratio: f64,
}

fn stats_row(name: &str, entries: &[&TileEntry]) -> StatsRow {
    let total: u64 = entries.iter().map(|e| (e.size * e.size) as u64).sum();
    let slick: u64 = entries.iter().map(|e| e.slick_pixel_count).sum();
    StatsRow {
        collection: name.to_string(),
        crops: entries.len() as u64,
        slick_pixels: slick,
        sea_pixels: total - slick,
        slick_ratio: if total == 0 { 0.0 } else { slick as f64 / total as f64 },
    }
}

/// Crop and pixel counts per split plus the total.
pub fn dataset_stats(manifest: &TileManifest) -> Vec<StatsRow> {
    let mut rows: Vec<StatsRow> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .map(|s| {
            let e: Vec<&TileEntry> = manifest.entries.iter().filter(|e| e.split == s).collect();
            stats_row(s.as_str(), &e)
        })
        .collect();
    rows.push(stats_row("total", &manifest.entries.iter().collect::<Vec<_>>()));
    rows
}
