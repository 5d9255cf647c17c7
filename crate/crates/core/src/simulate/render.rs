//! Scene rendering: GMF clutter, slick damping, multiplicative speckle.

use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::shape::{gen_slick_shape, ShapeBounds, SlickShape, SlickSpec};
use super::wind_field::{WindField, DETECTABILITY_MIN_SPEED};
use crate::detect::{instances_from_mask, Connectivity, InstanceSource, SlickInstance};
use crate::error::{Error, Result};
use crate::gmf::{Cmod5n, GeophysicalModel, MIN_SPEED};
use crate::raster::{BinaryMask, RasterGrid, SceneMetadata};
use crate::seed::{self, streams};

/// Antenna azimuth used to turn wind direction into relative direction.
pub const ANTENNA_AZIMUTH_DEG: f64 = 0.0;
pub const DEFAULT_LOOKS: f64 = 4.4;

// Contrast window knots, m/s.
const RISE_START: f64 = 1.5;
const PLATEAU_START: f64 = 3.0;
const PLATEAU_END: f64 = 6.0;
const FADE_END: f64 = 10.0;

/// Slick-vs-sea damping in dB for local wind `v`: zero below 1.5 m/s, cosine
/// ramp to `damping_max` at 3 m/s, flat to 6 m/s, cosine fade to zero at
/// 10 m/s.
pub fn damping_contrast(v: f64, damping_max: f64) -> f64 {
    let ramp = |t: f64| 0.5 * (1.0 - (std::f64::consts::PI * t).cos());
    if v <= RISE_START || v >= FADE_END {
        0.0
    } else if v < PLATEAU_START {
        damping_max * ramp((v - RISE_START) / (PLATEAU_START - RISE_START))
    } else if v <= PLATEAU_END {
        damping_max
    } else {
        damping_max * (1.0 - ramp((v - PLATEAU_END) / (FADE_END - PLATEAU_END)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Speckle {
    Off,
    /// Unit-mean gamma with shape `looks`.
    Gamma { looks: f64 },
}

impl Default for Speckle {
    fn default() -> Self {
        Speckle::Gamma {
            looks: DEFAULT_LOOKS,
        }
    }
}

impl Speckle {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Speckle::Gamma { looks } if !(looks >= 1.0 && looks.is_finite()) => Err(Error::Config(
                format!("speckle looks must be >= 1, got {looks}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookalikeConfig {
    /// Truth wind below this marks calm-water lookalike pixels.
    pub low_wind_threshold_mps: f64,
}

impl Default for LookalikeConfig {
    fn default() -> Self {
        Self {
            low_wind_threshold_mps: DETECTABILITY_MIN_SPEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneGroundTruth {
    pub semantic_mask: BinaryMask,
    /// Sorted as produced by connected-component labeling; `kind` is set.
    pub instances: Vec<SlickInstance>,
    pub lookalike_mask: BinaryMask,
    pub wind_truth: WindField,
    pub config_echo: serde_json::Value,
}

#[derive(Serialize)]
struct RenderEcho<'a> {
    scene_id: &'a str,
    slicks: &'a [SlickSpec],
    lookalike: &'a LookalikeConfig,
    speckle: &'a Speckle,
    seed: u64,
}

/// True if `shape` touches (8-neighbourhood) any pixel already in `occupied`.
pub fn touches(shape: &SlickShape, occupied: &BinaryMask) -> bool {
    let (w, h) = occupied.dims();
    shape.pixels.iter().any(|&(r, c)| {
        (-1i64..=1).any(|dr| {
            (-1i64..=1).any(|dc| {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                nr >= 0
                    && nc >= 0
                    && nr < h as i64
                    && nc < w as i64
                    && occupied.get(nr as usize, nc as usize)
            })
        })
    })
}

/// Renders σ0 (linear) and ground truth. Slicks must not touch each other.
pub fn render_scene(
    meta: &SceneMetadata,
    wind: &WindField,
    slicks: &[SlickSpec],
    lookalike: &LookalikeConfig,
    speckle: Speckle,
    seed: u64,
) -> Result<(RasterGrid, SceneGroundTruth)> {
    render_inner(meta, wind, slicks, lookalike, speckle, seed)
        .map_err(|e| e.in_scene(&meta.scene_id))
}

fn render_inner(
    meta: &SceneMetadata,
    wind: &WindField,
    slicks: &[SlickSpec],
    lookalike: &LookalikeConfig,
    speckle: Speckle,
    seed: u64,
) -> Result<(RasterGrid, SceneGroundTruth)> {
    meta.validate()?;
    speckle.validate()?;
    let (w, h) = wind.dims();
    if wind.direction.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            found: wind.direction.dims(),
        });
    }
    let bounds = ShapeBounds {
        width: w,
        height: h,
        pixel_spacing: meta.pixel_spacing,
    };

    // Per-pixel slick index (0 = open sea).
    let mut owner = vec![0u32; w * h];
    let mut semantic = BinaryMask::new(w, h);
    for (i, spec) in slicks.iter().enumerate() {
        let shape = gen_slick_shape(spec, &bounds)?;
        if touches(&shape, &semantic) {
            return Err(Error::Placement(format!(
                "slick {} overlaps or touches an earlier slick",
                i + 1
            )));
        }
        for &(r, c) in &shape.pixels {
            semantic.set(r as usize, c as usize, true);
            owner[r as usize * w + c as usize] = i as u32 + 1;
        }
    }

    let model = Cmod5n;
    let speed = wind.speed.values();
    let direction = wind.direction.values();
    let mut sigma0 = vec![0.0f32; w * h];
    crate::par::for_each_row(&mut sigma0, w, |r, row| {
        let mut rng = seed::rng(seed, streams::SPECKLE_ROW, r as u64);
        let gamma = match speckle {
            Speckle::Gamma { looks } => Some(Gamma::new(looks, 1.0 / looks).expect("validated")),
            Speckle::Off => None,
        };
        for (c, out) in row.iter_mut().enumerate() {
            let i = r * w + c;
            let v = (speed[i] as f64).max(MIN_SPEED);
            let phi = direction[i] as f64 - ANTENNA_AZIMUTH_DEG;
            let theta = meta.incidence_angle.at_column(c, w);
            let mut s = model.sigma0(v, phi, theta);
            if owner[i] > 0 {
                let spec = &slicks[owner[i] as usize - 1];
                s *= 10f64.powf(-damping_contrast(speed[i] as f64, spec.damping_max_db) / 10.0);
            }
            if let Some(g) = &gamma {
                s *= rng.sample(g);
            }
            *out = s as f32;
        }
    });
    let sigma0 = RasterGrid::new(w, h, sigma0)?.with_pixel_spacing(meta.pixel_spacing)?;

    let mut instances = instances_from_mask(
        &semantic,
        meta.pixel_spacing,
        Connectivity::Eight,
        InstanceSource::GroundTruth,
    );
    for inst in &mut instances {
        let (r, c) = inst.pixels[0];
        inst.kind = Some(slicks[owner[r as usize * w + c as usize] as usize - 1].kind);
    }
    let lookalike_bits = speed
        .iter()
        .zip(semantic.bits())
        .map(|(&v, &s)| !s && (v as f64) < lookalike.low_wind_threshold_mps)
        .collect();
    let lookalike_mask = BinaryMask::from_bits(w, h, lookalike_bits)?;
    let config_echo = serde_json::to_value(RenderEcho {
        scene_id: &meta.scene_id,
        slicks,
        lookalike,
        speckle: &speckle,
        seed,
    })
    .map_err(|e| Error::Input(e.to_string()))?;

    Ok((
        sigma0,
        SceneGroundTruth {
            semantic_mask: semantic,
            instances,
            lookalike_mask,
            wind_truth: wind.clone(),
            config_echo,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::SlickKind;
    use crate::raster::{to_db, IncidenceAngle};

    #[test]
    fn contrast_window_knots() {
        assert_eq!(damping_contrast(1.0, 6.0), 0.0);
        assert_eq!(damping_contrast(1.5, 6.0), 0.0);
        assert_eq!(damping_contrast(3.0, 6.0), 6.0);
        assert_eq!(damping_contrast(4.5, 6.0), 6.0);
        assert_eq!(damping_contrast(6.0, 6.0), 6.0);
        assert_eq!(damping_contrast(10.0, 6.0), 0.0);
        assert_eq!(damping_contrast(12.0, 6.0), 0.0);
        assert!((damping_contrast(2.25, 6.0) - 3.0).abs() < 1e-12);
        assert!((damping_contrast(8.0, 6.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contrast_continuous() {
        let mut prev = damping_contrast(0.0, 6.0);
        let mut v = 0.0;
        while v < 12.0 {
            v += 1e-4;
            let cur = damping_contrast(v, 6.0);
            assert!((cur - prev).abs() < 1e-2, "jump at {v}");
            assert!(cur <= 6.0 && cur >= 0.0);
            prev = cur;
        }
    }

    fn meta() -> SceneMetadata {
        SceneMetadata::new("unit", IncidenceAngle::Constant { degrees: 35.0 }, 3)
    }

    #[test]
    fn slick_ratio_speckle_free() {
        let wind = WindField::uniform(128, 128, 4.0, 30.0).unwrap();
        let spec = SlickSpec {
            shape_seed: 1,
            centroid: (64.0, 64.0),
            target_area_hm2: 10.0,
            kind: SlickKind::Spill,
            damping_max_db: 6.0,
        };
        let (s, gt) = render_scene(&meta(), &wind, &[spec], &LookalikeConfig::default(), Speckle::Off, 1).unwrap();
        let inside: Vec<f32> = s.values().iter().zip(gt.semantic_mask.bits()).filter(|(_, &m)| m).map(|(v, _)| *v).collect();
        let outside = s.values().iter().zip(gt.semantic_mask.bits()).find(|(_, &m)| !m).unwrap().0;
        let ratio = to_db(inside[0] as f64 / *outside as f64);
        assert!((ratio + 6.0).abs() < 1e-4, "{ratio}");
        assert_eq!(gt.instances.len(), 1);
        assert_eq!(gt.instances[0].kind, Some(SlickKind::Spill));
        assert!(gt.lookalike_mask.is_empty());
    }

    #[test]
    fn touching_slicks_rejected() {
        let wind = WindField::uniform(128, 128, 4.0, 0.0).unwrap();
        let spec = SlickSpec {
            shape_seed: 1,
            centroid: (64.0, 64.0),
            target_area_hm2: 5.0,
            kind: SlickKind::Seep,
            damping_max_db: 6.0,
        };
        let err = render_scene(&meta(), &wind, &[spec.clone(), spec], &LookalikeConfig::default(), Speckle::Off, 1).unwrap_err();
        assert!(err.to_string().contains("unit"));
        assert!(matches!(err.class(), crate::error::ErrorClass::Config));
    }

    #[test]
    fn deterministic_and_truth_consistent() {
        let wind = WindField::uniform(96, 96, 1.0, 0.0).unwrap();
        let spec = SlickSpec {
            shape_seed: 4,
            centroid: (48.0, 48.0),
            target_area_hm2: 4.0,
            kind: SlickKind::Seep,
            damping_max_db: 6.0,
        };
        let a = render_scene(&meta(), &wind, &[spec.clone()], &LookalikeConfig::default(), Speckle::default(), 77).unwrap();
        let b = render_scene(&meta(), &wind, &[spec], &LookalikeConfig::default(), Speckle::default(), 77).unwrap();
        assert!(a.0.bit_eq(&b.0));
        // Union of instances is the semantic mask; lookalikes are disjoint from it.
        let union = crate::detect::mask_from_instances(96, 96, &a.1.instances);
        assert_eq!(union, a.1.semantic_mask);
        assert_eq!(a.1.lookalike_mask.intersection_count(&a.1.semantic_mask), 0);
        assert_eq!(a.1.lookalike_mask.count() + a.1.semantic_mask.count(), 96 * 96);
    }

    #[test]
    fn bad_looks_rejected() {
        let wind = WindField::uniform(8, 8, 5.0, 0.0).unwrap();
        assert!(render_scene(&meta(), &wind, &[], &LookalikeConfig::default(), Speckle::Gamma { looks: 0.5 }, 0).is_err());
    }
}
