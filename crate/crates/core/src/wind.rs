//! Wind retrieval from σ0 and wind context around slick instances.

use serde::{Deserialize, Serialize};

use crate::detect::morphology::disk_offsets;
use crate::detect::SlickInstance;
use crate::error::{Error, Result};
use crate::gmf::{InversionFlag, InversionLut, Nrcs};
use crate::raster::{BinaryMask, RasterGrid, SceneMetadata};
use crate::simulate::{Provenance, WindField, ANTENNA_AZIMUTH_DEG};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub pixels: u64,
    pub clamped_low: u64,
    pub clamped_high: u64,
    pub nodata: u64,
}

#[derive(Default)]
struct RowCounts {
    low: u64,
    high: u64,
    nodata: u64,
}

/// Inverts σ0 pixel by pixel with the supplied wind direction (degrees,
/// meteorological, per pixel). Invalid σ0 samples come out as NaN.
pub fn retrieve_wind(
    sigma0: &RasterGrid,
    direction: &RasterGrid,
    meta: &SceneMetadata,
    lut: &InversionLut,
) -> Result<(WindField, RetrievalSummary)> {
    meta.validate()?;
    let (w, h) = sigma0.dims();
    if direction.dims() != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            found: direction.dims(),
        });
    }
    let rows = crate::par::try_map_range(h, |r| -> Result<(Vec<f32>, RowCounts)> {
        let mut out = Vec::with_capacity(w);
        let mut counts = RowCounts::default();
        let theta_row: Vec<f64> = (0..w).map(|c| meta.incidence_angle.at_column(c, w)).collect();
        for c in 0..w {
            let s = sigma0.get(r, c);
            let d = direction.get(r, c);
            if sigma0.is_nodata(s) || !(s > 0.0) || !d.is_finite() {
                counts.nodata += 1;
                out.push(f32::NAN);
                continue;
            }
            let inv = lut.invert(
                Nrcs::new(s as f64)?,
                d as f64 - ANTENNA_AZIMUTH_DEG,
                theta_row[c],
            )?;
            match inv.flag {
                InversionFlag::Ok => {}
                InversionFlag::ClampedLow => counts.low += 1,
                InversionFlag::ClampedHigh => counts.high += 1,
            }
            out.push(inv.speed as f32);
        }
        Ok((out, counts))
    })
    .map_err(|e| e.in_scene(&meta.scene_id))?;

    let mut summary = RetrievalSummary {
        pixels: (w * h) as u64,
        ..Default::default()
    };
    let mut speed = Vec::with_capacity(w * h);
    for (row, counts) in rows {
        speed.extend(row);
        summary.clamped_low += counts.low;
        summary.clamped_high += counts.high;
        summary.nodata += counts.nodata;
    }
    let spacing = sigma0.pixel_spacing();
    let field = WindField {
        speed: RasterGrid::new(w, h, speed)?
            .with_pixel_spacing(spacing)?
            .with_nodata(f32::NAN),
        direction: direction.clone(),
        provenance: Provenance::Retrieved,
    };
    Ok((field, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeighborhoodConfig {
    pub radius_m: f64,
    pub exclude_slick_pixels: bool,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            radius_m: 50.0,
            exclude_slick_pixels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlickWindContext {
    pub instance_id: u32,
    pub mean_neighborhood_speed: f64,
    pub neighborhood_pixel_count: usize,
    pub radius_m: f64,
}

/// Mean wind over the disk dilation of `instance`, clipped to the image.
/// With `exclude_slick_pixels`, pixels in `exclusion` (and the instance
/// itself) are left out. NaN / nodata wind samples are skipped.
pub fn slick_neighborhood_wind(
    instance: &SlickInstance,
    speed: &RasterGrid,
    exclusion: &BinaryMask,
    config: &NeighborhoodConfig,
) -> Result<SlickWindContext> {
    if !(config.radius_m > 0.0) {
        return Err(Error::Config("neighborhood radius_m must be > 0".into()));
    }
    let (w, h) = speed.dims();
    exclusion.ensure_dims((w, h))?;
    let radius_px = config.radius_m / speed.pixel_spacing();
    let offsets = disk_offsets(radius_px);
    let reach = radius_px.floor() as i64;

    let b = instance.bbox;
    let r0 = (b.r0 as i64 - reach).max(0);
    let c0 = (b.c0 as i64 - reach).max(0);
    let r1 = (b.r1 as i64 + reach).min(h as i64 - 1);
    let c1 = (b.c1 as i64 + reach).min(w as i64 - 1);
    if r0 > r1 || c0 > c1 {
        return Err(Error::EmptyNeighborhood(instance.id));
    }
    let lw = (c1 - c0 + 1) as usize;
    let lh = (r1 - r0 + 1) as usize;
    let mut hood = vec![false; lw * lh];
    for &(r, c) in &instance.pixels {
        for &(dr, dc) in &offsets {
            let (nr, nc) = (r as i64 + dr as i64, c as i64 + dc as i64);
            if nr >= r0 && nr <= r1 && nc >= c0 && nc <= c1 {
                hood[(nr - r0) as usize * lw + (nc - c0) as usize] = true;
            }
        }
    }
    if config.exclude_slick_pixels {
        for &(r, c) in &instance.pixels {
            let (lr, lc) = (r as i64 - r0, c as i64 - c0);
            if lr >= 0 && lc >= 0 && (lr as usize) < lh && (lc as usize) < lw {
                hood[lr as usize * lw + lc as usize] = false;
            }
        }
    }

    let mut sum = 0.0;
    let mut n = 0usize;
    for lr in 0..lh {
        for lc in 0..lw {
            if !hood[lr * lw + lc] {
                continue;
            }
            let (r, c) = (lr + r0 as usize, lc + c0 as usize);
            if config.exclude_slick_pixels && exclusion.get(r, c) {
                continue;
            }
            let v = speed.get(r, c);
            if speed.is_nodata(v) || !v.is_finite() {
                continue;
            }
            sum += v as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyNeighborhood(instance.id));
    }
    Ok(SlickWindContext {
        instance_id: instance.id,
        mean_neighborhood_speed: sum / n as f64,
        neighborhood_pixel_count: n,
        radius_m: config.radius_m,
    })
}

/// Context for every instance, in input order.
pub fn neighborhood_winds(
    instances: &[SlickInstance],
    speed: &RasterGrid,
    exclusion: &BinaryMask,
    config: &NeighborhoodConfig,
) -> Result<Vec<SlickWindContext>> {
    crate::par::map_slice(instances, |i| {
        slick_neighborhood_wind(i, speed, exclusion, config)
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{instances_from_mask, Connectivity, InstanceSource};
    use crate::gmf::forward;
    use crate::gmf::GmfInputs;
    use crate::raster::IncidenceAngle;
    use proptest::prelude::*;

    fn disk_oracle(
        inst: &SlickInstance,
        speed: &RasterGrid,
        excl: &BinaryMask,
        radius_px: f64,
    ) -> Option<f64> {
        let (w, h) = speed.dims();
        let mut sum = 0.0;
        let mut n = 0;
        for r in 0..h {
            for c in 0..w {
                if excl.get(r, c) || inst.pixels.contains(&(r as u32, c as u32)) {
                    continue;
                }
                let near = inst.pixels.iter().any(|&(pr, pc)| {
                    let (dr, dc) = (r as f64 - pr as f64, c as f64 - pc as f64);
                    dr * dr + dc * dc <= radius_px * radius_px
                });
                if near {
                    sum += speed.get(r, c) as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    #[test]
    fn uniform_field_gives_constant() {
        let mut m = BinaryMask::new(40, 30);
        for r in 10..15 {
            for c in 5..20 {
                m.set(r, c, true);
            }
        }
        let inst = &instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::GroundTruth)[0];
        let speed = RasterGrid::filled(40, 30, 6.25).unwrap();
        let ctx = slick_neighborhood_wind(inst, &speed, &m, &NeighborhoodConfig::default()).unwrap();
        assert_eq!(ctx.mean_neighborhood_speed, 6.25);
    }

    #[test]
    fn whole_image_slick_has_empty_neighborhood() {
        let mut m = BinaryMask::new(4, 4);
        m.bits_mut().fill(true);
        let inst = &instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::GroundTruth)[0];
        let speed = RasterGrid::filled(4, 4, 3.0).unwrap();
        let err = slick_neighborhood_wind(inst, &speed, &m, &NeighborhoodConfig::default());
        assert!(matches!(err, Err(Error::EmptyNeighborhood(1))));
    }

    #[test]
    fn retrieval_round_trips_noise_free() {
        let (w, h) = (24, 6);
        let meta = SceneMetadata::new("t", IncidenceAngle::Ramp { near: 25.0, far: 45.0 }, 0);
        let truth = |c: usize| 2.0 + c as f64 * 0.5;
        let sigma0 = RasterGrid::from_fn(w, h, |_, c| {
            let theta = meta.incidence_angle.at_column(c, w);
            forward(&GmfInputs::new(truth(c), 30.0, theta).unwrap()).unwrap().value() as f32
        })
        .unwrap();
        let dir = RasterGrid::filled(w, h, 30.0).unwrap();
        let (field, summary) =
            retrieve_wind(&sigma0, &dir, &meta, InversionLut::default_cmod5n()).unwrap();
        assert_eq!(summary.nodata, 0);
        assert_eq!(field.provenance, Provenance::Retrieved);
        for c in 0..w {
            assert!((field.speed.get(3, c) as f64 - truth(c)).abs() < 0.01, "col {c}");
        }
    }

    #[test]
    fn nodata_pixels_are_counted() {
        let meta = SceneMetadata::new("t", IncidenceAngle::Constant { degrees: 30.0 }, 0);
        let mut v = vec![0.05f32; 9];
        v[4] = f32::NAN;
        v[5] = 0.0;
        let sigma0 = RasterGrid::new(3, 3, v).unwrap().with_nodata(f32::NAN);
        let dir = RasterGrid::filled(3, 3, 0.0).unwrap();
        let (field, s) = retrieve_wind(&sigma0, &dir, &meta, InversionLut::default_cmod5n()).unwrap();
        assert_eq!(s.nodata, 2);
        assert!(field.speed.get(1, 1).is_nan());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn matches_disk_oracle(
            bits in proptest::collection::vec(prop::bool::weighted(0.08), 20 * 16),
            radius_m in 1.0f64..45.0,
            vals in proptest::collection::vec(0.0f32..12.0, 20 * 16),
        ) {
            let m = BinaryMask::from_bits(20, 16, bits).unwrap();
            let speed = RasterGrid::new(20, 16, vals).unwrap();
            let cfg = NeighborhoodConfig { radius_m, exclude_slick_pixels: true };
            for inst in instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::GroundTruth) {
                let got = slick_neighborhood_wind(&inst, &speed, &m, &cfg).ok().map(|c| c.mean_neighborhood_speed);
                let want = disk_oracle(&inst, &speed, &m, radius_m / 10.0);
                match (got, want) {
                    (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-6),
                    (None, None) => {}
                    other => prop_assert!(false, "{:?}", other),
                }
            }
        }
    }
}
