//! Dark-spot baseline detector, instance extraction, and prediction import.

mod instances;
pub mod median;
pub mod morphology;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use instances::{
    instances_from_mask, label_components, mask_from_instances, BBox, Connectivity,
    InstanceSource, SlickInstance, SlickKind,
};

use crate::error::{Error, Result};
use crate::raster::{read_raster, to_db, BinaryMask, RasterGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Side of the square background window, pixels (odd).
    pub background_window: usize,
    /// Flag pixels this many dB below the local background.
    pub threshold_db: f64,
    pub min_area_hm2: f64,
    pub morph_radius: usize,
    pub connectivity: Connectivity,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            background_window: 129,
            threshold_db: 2.5,
            min_area_hm2: 0.2,
            morph_radius: 1,
            connectivity: Connectivity::Eight,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.background_window % 2 == 0 || self.background_window <= 2 * self.morph_radius {
            return Err(Error::Config(format!(
                "background_window must be odd and > 2 x morph_radius (got {} with radius {})",
                self.background_window, self.morph_radius
            )));
        }
        if !(self.threshold_db > 0.0) {
            return Err(Error::Config(format!(
                "threshold_db must be > 0, got {}",
                self.threshold_db
            )));
        }
        if !(self.min_area_hm2 >= 0.0) {
            return Err(Error::Config("min_area_hm2 must be >= 0".into()));
        }
        Ok(())
    }
}

fn db_image(sigma0: &RasterGrid) -> Vec<f64> {
    sigma0
        .values()
        .iter()
        .map(|&v| {
            if sigma0.is_nodata(v) || v <= 0.0 {
                f64::NAN
            } else {
                to_db(v as f64)
            }
        })
        .collect()
}

/// Pixels darker than their local median background by more than the
/// threshold. No morphology or area filtering.
pub fn dark_pixels(sigma0: &RasterGrid, params: &DetectorParams) -> Result<BinaryMask> {
    params.validate()?;
    let (w, h) = sigma0.dims();
    if w < params.background_window || h < params.background_window {
        return Err(Error::Input(format!(
            "image {w}x{h} smaller than background window {}",
            params.background_window
        )));
    }
    let db = db_image(sigma0);
    let background = median::median_filter_db(&db, w, h, params.background_window);
    let bits = db
        .iter()
        .zip(&background)
        .map(|(&v, &bg)| !v.is_nan() && !bg.is_nan() && v < bg - params.threshold_db)
        .collect();
    BinaryMask::from_bits(w, h, bits)
}

/// Drops components smaller than `min_area_hm2`.
pub fn remove_small_components(
    mask: &BinaryMask,
    min_area_hm2: f64,
    pixel_spacing: f64,
    connectivity: Connectivity,
) -> BinaryMask {
    let (labels, count) = label_components(mask, connectivity);
    let mut sizes = vec![0usize; count as usize + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let keep: Vec<bool> = sizes
        .iter()
        .map(|&n| crate::raster::pixels_to_hm2(n, pixel_spacing) >= min_area_hm2)
        .collect();
    let bits = labels.iter().map(|&l| l > 0 && keep[l as usize]).collect();
    BinaryMask::from_bits(mask.width(), mask.height(), bits).expect("same dims")
}

/// Classical dark-spot segmentation: dB conversion, median background,
/// thresholding, opening then closing, small-component removal.
pub fn dark_spot_mask(sigma0: &RasterGrid, params: &DetectorParams) -> Result<BinaryMask> {
    if sigma0
        .values()
        .iter()
        .all(|&v| sigma0.is_nodata(v) || v <= 0.0)
    {
        log::warn!("dark_spot_mask: image holds no valid samples; returning empty mask");
        params.validate()?;
        return Ok(BinaryMask::new(sigma0.width(), sigma0.height()));
    }
    let flagged = dark_pixels(sigma0, params)?;
    let cleaned = morphology::close(
        &morphology::open(&flagged, params.morph_radius),
        params.morph_radius,
    );
    Ok(remove_small_components(
        &cleaned,
        params.min_area_hm2,
        sigma0.pixel_spacing(),
        params.connectivity,
    ))
}

/// Reads an externally produced mask and checks it against the scene size.
pub fn import_prediction_mask(path: &Path, scene_dims: (usize, usize)) -> Result<BinaryMask> {
    let (grid, _) = read_raster(path)?;
    let mask = BinaryMask::from_grid(&grid)?;
    mask.ensure_dims(scene_dims)?;
    Ok(mask)
}
