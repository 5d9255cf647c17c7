//! Multi-scene dataset generation and the on-disk scene layout.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_scene, touches, LookalikeConfig, Speckle};
use super::shape::{gen_slick_shape, ShapeBounds, SlickSpec, DEFAULT_DAMPING_DB};
use super::wind_field::{gen_wind_field_with_pockets, Pocket, WindFieldParams};
use crate::detect::{BBox, SlickKind};
use crate::error::{Error, Result};
use crate::raster::{
    hm2_to_pixels, read_json, write_json, write_mask, write_raster_tagged, BinaryMask,
    IncidenceAngle, SceneMetadata,
};
use crate::seed::{self, streams};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENES_DIR: &str = "scenes";

/// File stems inside one scene directory.
pub mod files {
    pub const SIGMA0: &str = "sigma0";
    pub const GT_MASK: &str = "gt_mask";
    pub const LOOKALIKE_MASK: &str = "lookalike_mask";
    pub const WIND_SPEED_TRUTH: &str = "wind_speed_truth";
    pub const WIND_DIRECTION: &str = "wind_direction";
    pub const INSTANCES: &str = "instances.json";
    pub const SCENE_CONFIG: &str = "scene.json";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    /// Uniform range of per-scene mean speed, m/s.
    pub mean_speed: (f64, f64),
    /// Absolute variance of the speed fluctuation, (m/s)²; ignored when
    /// `relative_std` is set.
    pub variance: f64,
    /// Fluctuation std as a fraction of each scene's mean speed.
    pub relative_std: Option<f64>,
    pub correlation_length_px: f64,
    pub direction_deg: (f64, f64),
    /// Inclusive range of pocket counts.
    pub pockets: (usize, usize),
    pub pocket_area_hm2: (f64, f64),
    pub pocket_floor_mps: f64,
    pub pocket_noise_std: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        Self {
            mean_speed: (0.5, 8.0),
            variance: 0.25,
            relative_std: None,
            correlation_length_px: 96.0,
            direction_deg: (0.0, 360.0),
            pockets: (0, 1),
            pocket_area_hm2: (150.0, 400.0),
            pocket_floor_mps: 0.5,
            pocket_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlickConfig {
    /// Inclusive range of slicks per scene.
    pub count: (usize, usize),
    pub area_hm2: (f64, f64),
    pub spill_fraction: f64,
    pub damping_max_db: f64,
    /// Probability that a slick is centred in a calm pocket (when one
    /// exists). Other slicks are kept clear of pockets.
    pub in_pocket_fraction: f64,
}

impl Default for SlickConfig {
    fn default() -> Self {
        Self {
            count: (1, 4),
            area_hm2: (1.0, 200.0),
            spill_fraction: 0.5,
            damping_max_db: DEFAULT_DAMPING_DB,
            in_pocket_fraction: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub scene_count: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing: f64,
    pub incidence: IncidenceAngle,
    /// `null` disables speckle.
    pub speckle_looks: Option<f64>,
    /// Steers per-scene slick area toward this global slick-pixel fraction.
    pub target_pixel_ratio: Option<f64>,
    /// The last `test_scene_count` scenes are held out as a test region.
    pub test_scene_count: usize,
    pub wind: WindConfig,
    pub slicks: SlickConfig,
    pub lookalike: LookalikeConfig,
    pub seed: Option<u64>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            scene_count: 20,
            width: 512,
            height: 512,
            pixel_spacing: 10.0,
            incidence: IncidenceAngle::Ramp {
                near: 30.0,
                far: 40.0,
            },
            speckle_looks: Some(super::render::DEFAULT_LOOKS),
            target_pixel_ratio: Some(0.034),
            test_scene_count: 0,
            wind: WindConfig::default(),
            slicks: SlickConfig::default(),
            lookalike: LookalikeConfig::default(),
            seed: None,
        }
    }
}

fn check_range(name: &str, r: (f64, f64), lo: f64, hi: f64) -> Result<()> {
    if !(r.0 <= r.1 && r.0 >= lo && r.1 <= hi) {
        return Err(Error::Config(format!(
            "{name} range [{}, {}] must be ordered and within [{lo}, {hi}]",
            r.0, r.1
        )));
    }
    Ok(())
}

impl DatasetConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = read_json(path).map_err(|e| match e {
            Error::Json { path, source } => {
                Error::Config(format!("{}: {source}", path.display()))
            }
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("scene width and height must be > 0".into()));
        }
        if !(self.pixel_spacing > 0.0) {
            return Err(Error::Config("pixel_spacing must be > 0".into()));
        }
        self.incidence.validate()?;
        self.speckle().validate()?;
        if let Some(k) = self.wind.relative_std {
            if !(k >= 0.0) {
                return Err(Error::Config("wind.relative_std must be >= 0".into()));
            }
        }
        if let Some(t) = self.target_pixel_ratio {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::Config(format!("target_pixel_ratio {t} outside [0, 1)")));
            }
        }
        if self.test_scene_count > self.scene_count {
            return Err(Error::Config("test_scene_count exceeds scene_count".into()));
        }
        check_range("wind.mean_speed", self.wind.mean_speed, 0.0, 15.0)?;
        check_range("wind.direction_deg", self.wind.direction_deg, -360.0, 720.0)?;
        check_range("wind.pocket_area_hm2", self.wind.pocket_area_hm2, 0.0, 1e6)?;
        check_range("slicks.area_hm2", self.slicks.area_hm2, 0.0, 1e6)?;
        if self.wind.pockets.0 > self.wind.pockets.1 || self.slicks.count.0 > self.slicks.count.1 {
            return Err(Error::Config("count ranges must be ordered".into()));
        }
        for (name, p) in [
            ("slicks.spill_fraction", self.slicks.spill_fraction),
            ("slicks.in_pocket_fraction", self.slicks.in_pocket_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.slicks.damping_max_db > 0.0) {
            return Err(Error::Config("slicks.damping_max_db must be > 0".into()));
        }
        Ok(())
    }

    pub fn speckle(&self) -> Speckle {
        match self.speckle_looks {
            Some(looks) => Speckle::Gamma { looks },
            None => Speckle::Off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: u32,
    pub kind: SlickKind,
    pub area_hm2: f64,
    pub pixel_count: usize,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePaths {
    pub sigma0: String,
    pub gt_mask: String,
    pub lookalike_mask: String,
    pub wind_speed_truth: String,
    pub wind_direction: String,
    pub instances: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub index: usize,
    pub test: bool,
    pub mean_wind_mps: f64,
    pub pocket_count: usize,
    pub slick_pixels: u64,
    pub total_pixels: u64,
    pub paths: ScenePaths,
    pub instances: Vec<InstanceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub dataset_seed: u64,
    pub scene_count: usize,
    pub width: usize,
    pub height: usize,
    pub pixel_spacing: f64,
    pub target_pixel_ratio: Option<f64>,
    pub slick_pixels: u64,
    pub total_pixels: u64,
    pub slick_pixel_ratio: f64,
    pub scenes: Vec<SceneEntry>,
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Scene directory relative to the dataset root.
pub fn scene_rel_dir(id: &str) -> PathBuf {
    Path::new(SCENES_DIR).join(id)
}

/// Everything needed to render one scene, drawn from the dataset stream.
#[derive(Debug, Clone, Serialize)]
pub struct ScenePlan {
    pub scene_id: String,
    pub wind: WindFieldParams,
    pub wind_seed: u64,
    pub speckle_seed: u64,
    pub slicks: Vec<SlickSpec>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub pockets: Vec<Pocket>,
}

fn sample(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..=r.1)
    } else {
        r.0
    }
}

fn sample_count(rng: &mut impl Rng, r: (usize, usize)) -> usize {
    rng.random_range(r.0..=r.1)
}

fn point_in_pocket(p: &Pocket, rng: &mut impl Rng) -> (f64, f64) {
    let rho = 0.6 * p.inner * rng.random::<f64>().sqrt();
    let t = rng.random_range(0.0..std::f64::consts::TAU);
    let (u, v) = (rho * p.semi_major * t.cos(), rho * p.semi_minor * t.sin());
    let (s, c) = p.angle.sin_cos();
    (p.centre.0 + u * s + v * c, p.centre.1 + u * c - v * s)
}

/// Draws wind parameters and places slicks for scene `index`.
pub fn plan_scene(cfg: &DatasetConfig, dataset_seed: u64, index: usize) -> Result<ScenePlan> {
    let id = scene_id(index);
    let scene_seed = seed::derive(dataset_seed, streams::SCENE, index as u64);
    let mut rng = seed::rng(scene_seed, streams::SLICK_LAYOUT, 0);
    let mut warnings = Vec::new();

    let mean_speed = sample(&mut rng, cfg.wind.mean_speed);
    let mut wind = WindFieldParams {
        mean_speed,
        variance: match cfg.wind.relative_std {
            Some(k) => (k * mean_speed).powi(2),
            None => cfg.wind.variance,
        },
        correlation_length_px: cfg.wind.correlation_length_px,
        low_wind_pockets: sample_count(&mut rng, cfg.wind.pockets),
        pocket_area_hm2: sample(&mut rng, cfg.wind.pocket_area_hm2),
        pocket_floor_mps: cfg.wind.pocket_floor_mps,
        pocket_noise_std: cfg.wind.pocket_noise_std,
        direction_deg: sample(&mut rng, cfg.wind.direction_deg).rem_euclid(360.0),
        pixel_spacing: cfg.pixel_spacing,
    };
    let wind_seed = seed::derive(scene_seed, streams::WIND_NOISE, 0);
    let pockets = loop {
        match gen_wind_field_with_pockets(cfg.width, cfg.height, wind_seed, &wind) {
            Ok((_, p)) => break p,
            Err(Error::Placement(msg)) if wind.low_wind_pockets > 0 => {
                warnings.push(format!("{id}: {msg}; using one pocket fewer"));
                wind.low_wind_pockets -= 1;
            }
            Err(e) => return Err(e.in_scene(&id)),
        }
    };

    let count = sample_count(&mut rng, cfg.slicks.count);
    let px_per_hm2 = hm2_to_pixels(1.0, cfg.pixel_spacing);
    let mut areas: Vec<f64> = match cfg.target_pixel_ratio {
        Some(ratio) if count > 0 => {
            let budget_hm2 = ratio * (cfg.width * cfg.height) as f64 / px_per_hm2;
            let weights: Vec<f64> = (0..count).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = weights.iter().sum();
            let raw: Vec<f64> = weights.iter().map(|w| budget_hm2 * w / total).collect();
            let clamped: Vec<f64> = raw
                .iter()
                .map(|a| a.clamp(cfg.slicks.area_hm2.0, cfg.slicks.area_hm2.1))
                .collect();
            if raw.iter().zip(&clamped).any(|(a, b)| a != b) {
                warnings.push(format!(
                    "{id}: slick areas clamped to [{}, {}] hm²; target pixel ratio not reachable",
                    cfg.slicks.area_hm2.0, cfg.slicks.area_hm2.1
                ));
            }
            clamped
        }
        _ => (0..count)
            .map(|_| {
                let (lo, hi) = (cfg.slicks.area_hm2.0.ln(), cfg.slicks.area_hm2.1.ln());
                sample(&mut rng, (lo, hi)).exp()
            })
            .collect(),
    };
    // Large slicks first: they are hardest to fit.
    areas.sort_by(|a, b| b.total_cmp(a));

    let bounds = ShapeBounds {
        width: cfg.width,
        height: cfg.height,
        pixel_spacing: cfg.pixel_spacing,
    };
    let mut occupied = BinaryMask::new(cfg.width, cfg.height);
    let mut slicks = Vec::new();
    for (k, &area) in areas.iter().enumerate() {
        let kind = if rng.random_bool(cfg.slicks.spill_fraction) {
            SlickKind::Spill
        } else {
            SlickKind::Seep
        };
        let in_pocket = !pockets.is_empty() && rng.random_bool(cfg.slicks.in_pocket_fraction);
        let shape_seed = rng.random::<u64>();
        let mut placed = false;
        for _ in 0..50 {
            let centroid = if in_pocket {
                let p = &pockets[rng.random_range(0..pockets.len())];
                point_in_pocket(p, &mut rng)
            } else {
                (
                    rng.random_range(0.0..cfg.height as f64),
                    rng.random_range(0.0..cfg.width as f64),
                )
            };
            let spec = SlickSpec {
                shape_seed,
                centroid,
                target_area_hm2: area,
                kind,
                damping_max_db: cfg.slicks.damping_max_db,
            };
            let Ok(shape) = gen_slick_shape(&spec, &bounds) else {
                continue;
            };
            if touches(&shape, &occupied) {
                continue;
            }
            let in_calm = |&(r, c): &(u32, u32)| {
                pockets.iter().any(|p| p.weight(r as f64, c as f64) > 0.0)
            };
            if !in_pocket && shape.pixels.iter().any(in_calm) {
                continue;
            }
            for &(r, c) in &shape.pixels {
                occupied.set(r as usize, c as usize, true);
            }
            slicks.push(spec);
            placed = true;
            break;
        }
        if !placed {
            warnings.push(format!("{id}: slick {} ({area:.2} hm²) could not be placed", k + 1));
        }
    }

    Ok(ScenePlan {
        scene_id: id,
        wind,
        wind_seed,
        speckle_seed: seed::derive(scene_seed, streams::SPECKLE_ROW, 0),
        slicks,
        warnings,
        pockets,
    })
}

fn rel(path: &Path) -> String {
    path.to_string_lossy().replace('\\', "/")
}

fn generate_scene(cfg: &DatasetConfig, dataset_seed: u64, index: usize, out: &Path) -> Result<(SceneEntry, Vec<String>)> {
    let plan = plan_scene(cfg, dataset_seed, index)?;
    let id = plan.scene_id.clone();
    let (wind, _) = gen_wind_field_with_pockets(cfg.width, cfg.height, plan.wind_seed, &plan.wind)
        .map_err(|e| e.in_scene(&id))?;
    let mut meta = SceneMetadata::new(&id, cfg.incidence, plan.speckle_seed);
    meta.pixel_spacing = cfg.pixel_spacing;
    let (sigma0, gt) = render_scene(
        &meta,
        &wind,
        &plan.slicks,
        &cfg.lookalike,
        cfg.speckle(),
        plan.speckle_seed,
    )?;

    let rel_dir = scene_rel_dir(&id);
    let dir = out.join(&rel_dir);
    write_raster_tagged(&sigma0, &meta, &dir.join(files::SIGMA0), Some("sigma0"))?;
    write_mask(&gt.semantic_mask, &meta, &dir.join(files::GT_MASK))?;
    write_mask(&gt.lookalike_mask, &meta, &dir.join(files::LOOKALIKE_MASK))?;
    write_raster_tagged(&wind.speed, &meta, &dir.join(files::WIND_SPEED_TRUTH), Some("wind_speed"))?;
    write_raster_tagged(&wind.direction, &meta, &dir.join(files::WIND_DIRECTION), Some("wind_direction"))?;
    let instances: Vec<InstanceEntry> = gt
        .instances
        .iter()
        .map(|i| InstanceEntry {
            id: i.id,
            kind: i.kind.expect("ground truth carries kind"),
            area_hm2: i.area_hm2,
            pixel_count: i.pixel_count(),
            bbox: i.bbox,
        })
        .collect();
    write_json(&instances, &dir.join(files::INSTANCES))?;
    write_json(&plan, &dir.join(files::SCENE_CONFIG))?;

    let entry = SceneEntry {
        scene_id: id,
        index,
        test: index >= cfg.scene_count - cfg.test_scene_count,
        mean_wind_mps: plan.wind.mean_speed,
        pocket_count: plan.pockets.len(),
        slick_pixels: gt.semantic_mask.count() as u64,
        total_pixels: (cfg.width * cfg.height) as u64,
        paths: ScenePaths {
            sigma0: rel(&rel_dir.join(files::SIGMA0)),
            gt_mask: rel(&rel_dir.join(files::GT_MASK)),
            lookalike_mask: rel(&rel_dir.join(files::LOOKALIKE_MASK)),
            wind_speed_truth: rel(&rel_dir.join(files::WIND_SPEED_TRUTH)),
            wind_direction: rel(&rel_dir.join(files::WIND_DIRECTION)),
            instances: rel(&rel_dir.join(files::INSTANCES)),
        },
        instances,
    };
    Ok((entry, plan.warnings))
}

/// Generates `cfg.scene_count` scenes under `out` and writes the manifest.
/// Scenes are independent functions of `(seed, index)`.
pub fn gen_dataset(cfg: &DatasetConfig, seed: u64, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let results = crate::par::try_map_range(cfg.scene_count, |i| generate_scene(cfg, seed, i, out))?;

    let mut scenes = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (entry, w) in results {
        scenes.push(entry);
        warnings.extend(w);
    }
    let slick_pixels: u64 = scenes.iter().map(|s| s.slick_pixels).sum();
    let total_pixels: u64 = scenes.iter().map(|s| s.total_pixels).sum();
    let ratio = if total_pixels > 0 {
        slick_pixels as f64 / total_pixels as f64
    } else {
        0.0
    };
    if let Some(target) = cfg.target_pixel_ratio {
        if total_pixels > 0 && (ratio - target).abs() > 0.3 * target {
            warnings.push(format!(
                "achieved slick pixel ratio {ratio:.4} is far from target {target:.4}"
            ));
        }
    }
    let manifest = Manifest {
        format_version: 1,
        dataset_seed: seed,
        scene_count: cfg.scene_count,
        width: cfg.width,
        height: cfg.height,
        pixel_spacing: cfg.pixel_spacing,
        target_pixel_ratio: cfg.target_pixel_ratio,
        slick_pixels,
        total_pixels,
        slick_pixel_ratio: ratio,
        scenes,
        warnings,
    };
    write_json(&manifest, &out.join(MANIFEST_FILE))?;
    Ok(manifest)
}
