//! Smooth random wind fields with low-wind pockets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{hm2_to_pixels, RasterGrid};
use crate::seed::{self, streams};

/// Speed below which a slick is invisible and calm water reads as a lookalike.
pub const DETECTABILITY_MIN_SPEED: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SimulatedTruth,
    Retrieved,
}

#[derive(Debug, Clone)]
pub struct WindField {
    pub speed: RasterGrid,
    /// Meteorological direction, degrees.
    pub direction: RasterGrid,
    pub provenance: Provenance,
}

impl WindField {
    pub fn uniform(width: usize, height: usize, speed: f64, direction: f64) -> Result<Self> {
        Ok(Self {
            speed: RasterGrid::filled(width, height, speed as f32)?,
            direction: RasterGrid::filled(width, height, direction as f32)?,
            provenance: Provenance::SimulatedTruth,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.speed.dims()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindFieldParams {
    pub mean_speed: f64,
    /// Variance of the speed fluctuation, (m/s)².
    pub variance: f64,
    /// Gaussian smoothing scale of the fluctuation, pixels.
    pub correlation_length_px: f64,
    pub low_wind_pockets: usize,
    /// Area of each pocket's sub-1.5 m/s core, hm².
    pub pocket_area_hm2: f64,
    /// Speed at the pocket centre.
    pub pocket_floor_mps: f64,
    /// Std of an extra finer-grained fluctuation inside pockets, m/s; it
    /// breaks the calm core into patches.
    pub pocket_noise_std: f64,
    pub direction_deg: f64,
    pub pixel_spacing: f64,
}

impl Default for WindFieldParams {
    fn default() -> Self {
        Self {
            mean_speed: 5.0,
            variance: 0.25,
            correlation_length_px: 96.0,
            low_wind_pockets: 0,
            pocket_area_hm2: 300.0,
            pocket_floor_mps: 0.5,
            pocket_noise_std: 0.0,
            direction_deg: 0.0,
            pixel_spacing: 10.0,
        }
    }
}

/// Elliptical calm patch. The blend weight is 1 inside `inner`, falls off
/// with a cosine ramp of normalized width [`POCKET_RAMP`], and is 0 beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pocket {
    pub centre: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
    pub inner: f64,
}

const POCKET_RAMP: f64 = 0.5;

impl Pocket {
    /// Normalized elliptical radius; 1.0 on the nominal contour.
    pub fn radius_at(&self, row: f64, col: f64) -> f64 {
        let (dy, dx) = (row - self.centre.0, col - self.centre.1);
        let (s, c) = self.angle.sin_cos();
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        ((u / self.semi_major).powi(2) + (v / self.semi_minor).powi(2)).sqrt()
    }

    pub fn weight(&self, row: f64, col: f64) -> f64 {
        let rho = self.radius_at(row, col);
        if rho <= self.inner {
            1.0
        } else if rho >= self.inner + POCKET_RAMP {
            0.0
        } else {
            let t = (rho - self.inner) / POCKET_RAMP;
            0.5 * (1.0 + (std::f64::consts::PI * t).cos())
        }
    }

    fn outer_extent(&self) -> f64 {
        self.semi_major * (self.inner + POCKET_RAMP)
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Unit-variance smooth Gaussian field. Noise is generated on a coarse grid
/// (spacing a quarter of the correlation length), blurred there, and
/// bilinearly upsampled.
fn gaussian_random_field(
    width: usize,
    height: usize,
    correlation_px: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let cell = (correlation_px / 4.0).max(1.0);
    let sigma = correlation_px / cell;
    let kernel = gaussian_kernel(sigma);
    let kr = kernel.len() / 2;
    let cw = (width as f64 / cell).ceil() as usize + 2;
    let ch = (height as f64 / cell).ceil() as usize + 2;
    let (pw, ph) = (cw + 2 * kr, ch + 2 * kr);
    let noise: Vec<f64> = (0..pw * ph).map(|_| rng.sample(StandardNormal)).collect();

    let mut horiz = vec![0.0; ph * cw];
    for r in 0..ph {
        for c in 0..cw {
            horiz[r * cw + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * noise[r * pw + c + k])
                .sum();
        }
    }
    let mut coarse = vec![0.0; ch * cw];
    for r in 0..ch {
        for c in 0..cw {
            coarse[r * cw + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * horiz[(r + k) * cw + c])
                .sum();
        }
    }
    // Blurred white noise has variance (Σ k²)² in 2-D.
    let norm = 1.0 / kernel.iter().map(|k| k * k).sum::<f64>();

    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let y = r as f64 / cell;
        let (y0, ty) = (y.floor() as usize, y.fract());
        for c in 0..width {
            let x = c as f64 / cell;
            let (x0, tx) = (x.floor() as usize, x.fract());
            let at = |rr: usize, cc: usize| coarse[rr * cw + cc];
            let v = (1.0 - ty) * ((1.0 - tx) * at(y0, x0) + tx * at(y0, x0 + 1))
                + ty * ((1.0 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
            out.push(v * norm);
        }
    }
    out
}

fn place_pockets(
    width: usize,
    height: usize,
    params: &WindFieldParams,
    seed: u64,
) -> Result<Vec<Pocket>> {
    let n = params.low_wind_pockets;
    if n == 0 {
        return Ok(Vec::new());
    }
    let area_px = hm2_to_pixels(params.pocket_area_hm2, params.pixel_spacing);
    if !(area_px > 0.0) {
        return Err(Error::Config("pocket_area_hm2 must be > 0".into()));
    }
    if n as f64 * area_px > 0.5 * (width * height) as f64 {
        return Err(Error::Config(format!(
            "{n} pockets of {} hm² cover more than 50% of the scene",
            params.pocket_area_hm2
        )));
    }
    // Put the 1.5 m/s contour on the nominal ellipse for the mean background.
    let inner = if params.mean_speed > DETECTABILITY_MIN_SPEED {
        let w_star = ((params.mean_speed - DETECTABILITY_MIN_SPEED)
            / (params.mean_speed - params.pocket_floor_mps))
            .clamp(0.0, 1.0);
        let t_star = (2.0 * w_star - 1.0).acos() / std::f64::consts::PI;
        (1.0 - t_star * POCKET_RAMP).max(0.05)
    } else {
        1.0
    };
    let radius = (area_px / std::f64::consts::PI).sqrt();
    let mut rng = seed::rng(seed, streams::POCKETS, 0);
    let mut pockets: Vec<Pocket> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..1000 {
            let q: f64 = rng.random_range(1.0..2.0);
            let (semi_major, semi_minor) = (radius * q.sqrt(), radius / q.sqrt());
            // The sub-threshold core must sit inside the scene, and pockets
            // must not touch so that each stays a distinct region.
            let core = semi_major * 1.05;
            if 2.0 * core >= height.min(width) as f64 {
                break;
            }
            let p = Pocket {
                centre: (
                    rng.random_range(core..height as f64 - core),
                    rng.random_range(core..width as f64 - core),
                ),
                semi_major,
                semi_minor,
                angle: rng.random_range(0.0..std::f64::consts::PI),
                inner,
            };
            let apart = pockets.iter().all(|o| {
                let d = ((o.centre.0 - p.centre.0).powi(2) + (o.centre.1 - p.centre.1).powi(2))
                    .sqrt();
                d > o.outer_extent() + p.outer_extent()
            });
            if apart {
                pockets.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement(format!(
                "could not place low-wind pocket {} of {n}",
                i + 1
            )));
        }
    }
    Ok(pockets)
}

/// Random wind field with calm pockets; also returns the pocket geometry.
pub fn gen_wind_field_with_pockets(
    width: usize,
    height: usize,
    seed: u64,
    params: &WindFieldParams,
) -> Result<(WindField, Vec<Pocket>)> {
    if !(0.0..=15.0).contains(&params.mean_speed) {
        return Err(Error::Config(format!(
            "mean_speed {} outside [0, 15]",
            params.mean_speed
        )));
    }
    if !(params.correlation_length_px >= 1.0) {
        return Err(Error::Config("correlation_length_px must be >= 1".into()));
    }
    if !(params.pocket_noise_std >= 0.0) {
        return Err(Error::Config("pocket_noise_std must be >= 0".into()));
    }
    if !(params.variance >= 0.0) {
        return Err(Error::Config("variance must be >= 0".into()));
    }
    if !(params.pocket_floor_mps >= 0.0 && params.pocket_floor_mps < DETECTABILITY_MIN_SPEED) {
        return Err(Error::Config("pocket_floor_mps must lie in [0, 1.5)".into()));
    }
    let pockets = place_pockets(width, height, params, seed)?;

    let noise = if params.variance > 0.0 {
        let mut rng = seed::rng(seed, streams::WIND_NOISE, 0);
        gaussian_random_field(width, height, params.correlation_length_px, &mut rng)
    } else {
        vec![0.0; width * height]
    };
    let calm_noise = if params.pocket_noise_std > 0.0 && !pockets.is_empty() {
        let mut rng = seed::rng(seed, streams::POCKETS, 1);
        gaussian_random_field(width, height, params.correlation_length_px / 3.0, &mut rng)
    } else {
        vec![0.0; width * height]
    };
    let std = params.variance.sqrt();
    let mut speed = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let mut v = params.mean_speed + std * noise[i];
            let calm = params.pocket_floor_mps + params.pocket_noise_std * calm_noise[i];
            for p in &pockets {
                let w = p.weight(r as f64, c as f64);
                if w > 0.0 {
                    v = v * (1.0 - w) + calm * w;
                }
            }
            speed.push(v.max(0.0) as f32);
        }
    }
    let speed = RasterGrid::new(width, height, speed)?.with_pixel_spacing(params.pixel_spacing)?;
    let direction = RasterGrid::filled(width, height, params.direction_deg as f32)?
        .with_pixel_spacing(params.pixel_spacing)?;
    Ok((
        WindField {
            speed,
            direction,
            provenance: Provenance::SimulatedTruth,
        },
        pockets,
    ))
}

pub fn gen_wind_field(
    width: usize,
    height: usize,
    seed: u64,
    params: &WindFieldParams,
) -> Result<WindField> {
    gen_wind_field_with_pockets(width, height, seed, params).map(|(w, _)| w)
}
