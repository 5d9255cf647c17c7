//! Slick outlines: elongated spline-like blobs for spills, meandering
//! ribbons for seeps.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::detect::{instances_from_mask, BBox, Connectivity, InstanceSource, SlickKind};
use crate::error::{Error, Result};
use crate::raster::{hm2_to_pixels, BinaryMask};
use crate::seed::{self, streams};

pub const MAX_SHAPE_ATTEMPTS: u64 = 100;
pub const AREA_TOLERANCE: f64 = 0.10;
pub const DEFAULT_DAMPING_DB: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlickSpec {
    pub shape_seed: u64,
    /// `(row, col)` in pixels.
    pub centroid: (f64, f64),
    pub target_area_hm2: f64,
    pub kind: SlickKind,
    #[serde(default = "default_damping")]
    pub damping_max_db: f64,
}

fn default_damping() -> f64 {
    DEFAULT_DAMPING_DB
}

impl SlickSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_area_hm2 > 0.0 && self.target_area_hm2 <= 1.0e6) {
            return Err(Error::Config(format!(
                "slick target_area_hm2 {} outside (0, 1e6]",
                self.target_area_hm2
            )));
        }
        if !(self.damping_max_db > 0.0) {
            return Err(Error::Config("damping_max_db must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeBounds {
    pub width: usize,
    pub height: usize,
    pub pixel_spacing: f64,
}

/// Realized slick footprint, pixels in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlickShape {
    pub pixels: Vec<(u32, u32)>,
    pub kind: SlickKind,
}

impl SlickShape {
    pub fn bbox(&self) -> BBox {
        BBox::of_pixels(&self.pixels).expect("shapes are non-empty")
    }
}

/// Even-odd point-in-polygon.
fn inside(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut hit = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            hit = !hit;
        }
        j = i;
    }
    hit
}

/// Pixel offsets (relative to the origin) whose centres fall in `poly`.
fn rasterize(poly: &[(f64, f64)]) -> Vec<(i64, i64)> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in poly {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let mut out = Vec::new();
    for r in y0.floor() as i64..=y1.ceil() as i64 {
        for c in x0.floor() as i64..=x1.ceil() as i64 {
            if inside(poly, c as f64, r as f64) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Keeps the largest 8-connected component of an offset set.
fn largest_component(offsets: &[(i64, i64)]) -> Vec<(i64, i64)> {
    if offsets.is_empty() {
        return Vec::new();
    }
    let r0 = offsets.iter().map(|p| p.0).min().unwrap();
    let c0 = offsets.iter().map(|p| p.1).min().unwrap();
    let h = (offsets.iter().map(|p| p.0).max().unwrap() - r0 + 1) as usize;
    let w = (offsets.iter().map(|p| p.1).max().unwrap() - c0 + 1) as usize;
    let mut m = BinaryMask::new(w, h);
    for &(r, c) in offsets {
        m.set((r - r0) as usize, (c - c0) as usize, true);
    }
    let comps = instances_from_mask(&m, 1.0, Connectivity::Eight, InstanceSource::GroundTruth);
    let best = comps
        .into_iter()
        .max_by(|a, b| a.pixels.len().cmp(&b.pixels.len()).then(b.id.cmp(&a.id)))
        .expect("non-empty");
    best.pixels
        .into_iter()
        .map(|(r, c)| (r as i64 + r0, c as i64 + c0))
        .collect()
}

/// Elongated closed outline scaled to `target_px`. Orientation stays within
/// ±10° of an image axis so the bounding box keeps the elongation.
fn spill_offsets(target_px: f64, rng: &mut impl Rng) -> Vec<(i64, i64)> {
    const VERTICES: usize = 96;
    let aspect: f64 = rng.random_range(3.0..6.0);
    let tilt = rng.random_range(-10.0f64..10.0).to_radians()
        + if rng.random_bool(0.5) {
            std::f64::consts::FRAC_PI_2
        } else {
            0.0
        };
    let harmonics: Vec<(f64, f64)> = (2..=5)
        .map(|k| {
            (
                rng.random_range(0.0..0.10 / k as f64),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let unit: Vec<(f64, f64)> = (0..VERTICES)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / VERTICES as f64;
            let r = 1.0
                + harmonics
                    .iter()
                    .enumerate()
                    .map(|(j, &(a, p))| a * ((j as f64 + 2.0) * t + p).cos())
                    .sum::<f64>();
            let (x, y) = (aspect.sqrt() * r * t.cos(), r * t.sin() / aspect.sqrt());
            let (s, c) = tilt.sin_cos();
            (x * c - y * s, x * s + y * c)
        })
        .collect();
    let mut scale = (target_px / std::f64::consts::PI).sqrt();
    let mut best = Vec::new();
    for _ in 0..12 {
        let poly: Vec<(f64, f64)> = unit.iter().map(|&(x, y)| (x * scale, y * scale)).collect();
        let px = largest_component(&rasterize(&poly));
        let area = px.len() as f64;
        best = px;
        if (area - target_px).abs() <= 0.03 * target_px || area == 0.0 {
            if area == 0.0 {
                scale *= 1.5;
                continue;
            }
            break;
        }
        scale *= (target_px / area).sqrt();
    }
    best
}

/// Meandering ribbon grown until it reaches `target_px`.
fn seep_offsets(target_px: f64, rng: &mut impl Rng) -> Vec<(i64, i64)> {
    let width = (target_px.sqrt() / 8.0).clamp(2.0, 6.0);
    let radius = width / 2.0;
    let stamp: Vec<(i64, i64)> = {
        let r = radius.ceil() as i64;
        (-r..=r)
            .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| ((dr * dr + dc * dc) as f64) <= radius * radius)
            .collect()
    };
    let turn = Normal::new(0.0, 0.06).expect("valid sigma");
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut curvature = 0.0f64;
    let (mut y, mut x) = (0.0f64, 0.0f64);
    let mut set: HashSet<(i64, i64)> = HashSet::new();
    let mut order: Vec<(i64, i64)> = Vec::new();
    let limit = (target_px * 50.0) as usize + 1000;
    for _ in 0..limit {
        let (cy, cx) = (y.round() as i64, x.round() as i64);
        for &(dr, dc) in &stamp {
            let p = (cy + dr, cx + dc);
            if set.insert(p) {
                order.push(p);
            }
        }
        if set.len() as f64 >= target_px {
            break;
        }
        curvature = 0.9 * curvature + rng.sample(turn);
        heading += curvature;
        y += 0.5 * heading.sin();
        x += 0.5 * heading.cos();
    }
    order
}

fn in_bounds_shift(offsets: &[(i64, i64)], centroid: (f64, f64), b: &ShapeBounds) -> Option<Vec<(u32, u32)>> {
    let n = offsets.len() as f64;
    let mr = offsets.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mc = offsets.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let dr = (centroid.0 - mr).round() as i64;
    let dc = (centroid.1 - mc).round() as i64;
    let mut px = Vec::with_capacity(offsets.len());
    for &(r, c) in offsets {
        let (r, c) = (r + dr, c + dc);
        if r < 0 || c < 0 || r >= b.height as i64 || c >= b.width as i64 {
            return None;
        }
        px.push((r as u32, c as u32));
    }
    px.sort_unstable();
    Some(px)
}

/// One 8-connected footprint centred on `spec.centroid`, within ±10% of the
/// target area and fully inside `bounds`. Spills additionally have a
/// bounding-box aspect ratio of at least 2.
pub fn gen_slick_shape(spec: &SlickSpec, bounds: &ShapeBounds) -> Result<SlickShape> {
    spec.validate()?;
    let target_px = hm2_to_pixels(spec.target_area_hm2, bounds.pixel_spacing);
    if target_px > (bounds.width * bounds.height) as f64 {
        return Err(Error::Placement(format!(
            "slick of {} hm² cannot fit a {}x{} scene",
            spec.target_area_hm2, bounds.width, bounds.height
        )));
    }
    if target_px < 4.0 {
        return Err(Error::Placement(format!(
            "slick of {} hm² is below four pixels",
            spec.target_area_hm2
        )));
    }
    for attempt in 0..MAX_SHAPE_ATTEMPTS {
        let mut rng = seed::rng(spec.shape_seed, streams::SHAPE_ATTEMPT, attempt);
        let offsets = match spec.kind {
            SlickKind::Spill => spill_offsets(target_px, &mut rng),
            SlickKind::Seep => seep_offsets(target_px, &mut rng),
        };
        if offsets.is_empty() {
            continue;
        }
        let area = offsets.len() as f64;
        if (area - target_px).abs() > AREA_TOLERANCE * target_px {
            continue;
        }
        let Some(pixels) = in_bounds_shift(&offsets, spec.centroid, bounds) else {
            continue;
        };
        let shape = SlickShape {
            pixels,
            kind: spec.kind,
        };
        if spec.kind == SlickKind::Spill && shape.bbox().aspect_ratio() < 2.0 {
            continue;
        }
        return Ok(shape);
    }
    Err(Error::Placement(format!(
        "could not fit a {:?} of {} hm² at ({:.1}, {:.1}) after {MAX_SHAPE_ATTEMPTS} attempts",
        spec.kind, spec.target_area_hm2, spec.centroid.0, spec.centroid.1
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> ShapeBounds {
        ShapeBounds {
            width: 512,
            height: 512,
            pixel_spacing: 10.0,
        }
    }

    fn spec(kind: SlickKind, area: f64, seed: u64) -> SlickSpec {
        SlickSpec {
            shape_seed: seed,
            centroid: (256.0, 256.0),
            target_area_hm2: area,
            kind,
            damping_max_db: 6.0,
        }
    }

    fn connected(px: &[(u32, u32)]) -> bool {
        let mut m = BinaryMask::new(512, 512);
        for &(r, c) in px {
            m.set(r as usize, c as usize, true);
        }
        instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::GroundTruth).len() == 1
    }

    #[test]
    fn one_hectare_is_about_100_pixels() {
        for kind in [SlickKind::Spill, SlickKind::Seep] {
            for s in 0..10 {
                let shape = gen_slick_shape(&spec(kind, 1.0, s), &bounds()).unwrap();
                assert!((90..=110).contains(&shape.pixels.len()), "{kind:?} {}", shape.pixels.len());
                assert!(connected(&shape.pixels));
            }
        }
    }

    #[test]
    fn same_seed_same_shape() {
        let a = gen_slick_shape(&spec(SlickKind::Seep, 12.0, 5), &bounds()).unwrap();
        let b = gen_slick_shape(&spec(SlickKind::Seep, 12.0, 5), &bounds()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spills_are_elongated() {
        for s in 0..100 {
            let shape = gen_slick_shape(&spec(SlickKind::Spill, 5.0 + s as f64, s), &bounds()).unwrap();
            assert!(shape.bbox().aspect_ratio() >= 2.0);
            let area = shape.pixels.len() as f64 / 100.0;
            assert!((area - (5.0 + s as f64)).abs() <= 0.1 * (5.0 + s as f64));
            assert!(connected(&shape.pixels));
        }
    }

    #[test]
    fn too_large_is_placement_error() {
        let b = ShapeBounds {
            width: 40,
            height: 40,
            pixel_spacing: 10.0,
        };
        let mut s = spec(SlickKind::Spill, 12.0, 1);
        s.centroid = (20.0, 20.0);
        assert!(matches!(gen_slick_shape(&s, &b), Err(Error::Placement(_))));
    }
}
