//! Grid containers and the `.bin` + `.json` raster interchange format.
//!
//! A raster on disk is a pair of files sharing a stem: `<stem>.bin` holds the
//! row-major little-endian `f32` payload and `<stem>.json` the header. Masks
//! use the same container with values restricted to `{0.0, 1.0}`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PIXEL_SPACING: f64 = 10.0;
/// Sentinel-1 C-band centre frequency.
pub const RADAR_FREQUENCY_GHZ: f64 = 5.405;
pub const MIN_INCIDENCE_DEG: f64 = 18.0;
pub const MAX_INCIDENCE_DEG: f64 = 50.0;
const MAX_PIXELS: u64 = 1 << 31;

/// Square metres in one hectometre squared.
pub const M2_PER_HM2: f64 = 1.0e4;

/// Area in hm² of `pixels` pixels at `pixel_spacing` metres.
pub fn pixels_to_hm2(pixels: usize, pixel_spacing: f64) -> f64 {
    pixels as f64 * (pixel_spacing * pixel_spacing) / M2_PER_HM2
}

/// Number of pixels covering `area_hm2` (not rounded).
pub fn hm2_to_pixels(area_hm2: f64, pixel_spacing: f64) -> f64 {
    area_hm2 * M2_PER_HM2 / (pixel_spacing * pixel_spacing)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "zero-sized grid",
        });
    }
    if (width as u64) * (height as u64) > MAX_PIXELS {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "width x height exceeds 2^31",
        });
    }
    Ok(())
}

/// Row-major 2-D field of `f32` samples. `(0, 0)` is the top-left pixel.
#[derive(Debug, Clone)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    pixel_spacing: f64,
    values: Vec<f32>,
    nodata: f32,
}

impl RasterGrid {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::Input(format!(
                "value count {} does not match {width}x{height}",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixel_spacing: DEFAULT_PIXEL_SPACING,
            values,
            nodata: f32::NAN,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        check_dims(width, height)?;
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Result<Self> {
        check_dims(width, height)?;
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::new(width, height, values)
    }

    pub fn with_pixel_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Domain {
                field: "pixel_spacing",
                value: spacing,
                allowed: "> 0",
            });
        }
        self.pixel_spacing = spacing;
        Ok(self)
    }

    pub fn with_nodata(mut self, nodata: f32) -> Self {
        self.nodata = nodata;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_spacing(&self) -> f64 {
        self.pixel_spacing
    }

    pub fn nodata(&self) -> f32 {
        self.nodata
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    /// True when `v` is the nodata marker (NaN always counts as nodata).
    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        v.is_nan() || v.to_bits() == self.nodata.to_bits()
    }

    /// Copies the `size_w` x `size_h` window starting at `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, size_w: usize, size_h: usize) -> Result<Self> {
        if row0 + size_h > self.height || col0 + size_w > self.width {
            return Err(Error::Input(format!(
                "crop {size_w}x{size_h} at ({row0},{col0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(size_w * size_h);
        for r in row0..row0 + size_h {
            let start = r * self.width + col0;
            values.extend_from_slice(&self.values[start..start + size_w]);
        }
        Ok(Self {
            width: size_w,
            height: size_h,
            pixel_spacing: self.pixel_spacing,
            values,
            nodata: self.nodata,
        })
    }

    /// Bitwise equality, NaN payloads included.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.pixel_spacing.to_bits() == other.pixel_spacing.to_bits()
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IncidenceAngle {
    Constant { degrees: f64 },
    /// Linear ramp across columns, near range at column 0.
    Ramp { near: f64, far: f64 },
}

impl IncidenceAngle {
    pub fn at_column(&self, col: usize, width: usize) -> f64 {
        match *self {
            IncidenceAngle::Constant { degrees } => degrees,
            IncidenceAngle::Ramp { near, far } => {
                if width <= 1 {
                    near
                } else {
                    near + (far - near) * col as f64 / (width - 1) as f64
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: f64| {
            if (MIN_INCIDENCE_DEG..=MAX_INCIDENCE_DEG).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain {
                    field: "incidence_angle",
                    value: v,
                    allowed: "[18, 50] degrees",
                })
            }
        };
        match *self {
            IncidenceAngle::Constant { degrees } => check(degrees),
            IncidenceAngle::Ramp { near, far } => check(near).and(check(far)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub radar_frequency_ghz: f64,
    pub incidence_angle: IncidenceAngle,
    pub pixel_spacing: f64,
    pub scene_id: String,
    pub acquisition_seed: u64,
    /// Free-form tag; a single intensity channel is modelled.
    #[serde(default = "default_polarization")]
    pub polarization: String,
}

fn default_polarization() -> String {
    "VV".to_owned()
}

impl SceneMetadata {
    pub fn new(scene_id: impl Into<String>, incidence_angle: IncidenceAngle, seed: u64) -> Self {
        Self {
            radar_frequency_ghz: RADAR_FREQUENCY_GHZ,
            incidence_angle,
            pixel_spacing: DEFAULT_PIXEL_SPACING,
            scene_id: scene_id.into(),
            acquisition_seed: seed,
            polarization: default_polarization(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.radar_frequency_ghz != RADAR_FREQUENCY_GHZ {
            return Err(Error::Domain {
                field: "radar_frequency_ghz",
                value: self.radar_frequency_ghz,
                allowed: "5.405",
            });
        }
        if !(self.pixel_spacing > 0.0) {
            return Err(Error::Domain {
                field: "pixel_spacing",
                value: self.pixel_spacing,
                allowed: "> 0",
            });
        }
        self.incidence_angle.validate()
    }
}

/// Row-major boolean mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Input(format!(
                "mask bit count {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Validates `{0, 1}` content and converts.
    pub fn from_grid(grid: &RasterGrid) -> Result<Self> {
        let offending = grid
            .values()
            .iter()
            .filter(|&&v| v != 0.0 && v != 1.0)
            .count();
        if offending > 0 {
            return Err(Error::NonBinaryMask { offending });
        }
        Ok(Self {
            width: grid.width(),
            height: grid.height(),
            bits: grid.values().iter().map(|&v| v == 1.0).collect(),
        })
    }

    pub fn to_grid(&self, pixel_spacing: f64) -> Result<RasterGrid> {
        RasterGrid::new(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )?
        .with_pixel_spacing(pixel_spacing)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn ensure_dims(&self, dims: (usize, usize)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: self.dims(),
            });
        }
        Ok(())
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        other.ensure_dims(self.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        })
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && **b)
            .count()
    }

    pub fn crop(&self, row0: usize, col0: usize, size_w: usize, size_h: usize) -> Self {
        let mut bits = Vec::with_capacity(size_w * size_h);
        for r in row0..row0 + size_h {
            let start = r * self.width + col0;
            bits.extend_from_slice(&self.bits[start..start + size_w]);
        }
        Self {
            width: size_w,
            height: size_h,
            bits,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    format_version: u32,
    width: usize,
    height: usize,
    pixel_spacing: f64,
    /// `null` encodes NaN.
    nodata: Option<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quantity: Option<String>,
    metadata: SceneMetadata,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// `(<stem>.bin, <stem>.json)` for a raster path given with or without extension.
pub fn raster_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut bin = stem.clone().into_os_string();
    bin.push(".bin");
    let mut json = stem.into_os_string();
    json.push(".json");
    (bin.into(), json.into())
}

pub fn write_raster(grid: &RasterGrid, meta: &SceneMetadata, path: &Path) -> Result<()> {
    write_raster_tagged(grid, meta, path, None)
}

/// Like [`write_raster`], recording what the grid holds (`"sigma0"`, `"mask"`, ...).
pub fn write_raster_tagged(
    grid: &RasterGrid,
    meta: &SceneMetadata,
    path: &Path,
    quantity: Option<&str>,
) -> Result<()> {
    check_dims(grid.width, grid.height)?;
    let (bin_path, json_path) = raster_paths(path);
    if let Some(parent) = bin_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }

    let mut payload = Vec::with_capacity(grid.values.len() * 4);
    for v in &grid.values {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin_path, &payload).map_err(|e| Error::io(&bin_path, e))?;

    let sidecar = Sidecar {
        format_version: FORMAT_VERSION,
        width: grid.width,
        height: grid.height,
        pixel_spacing: grid.pixel_spacing,
        nodata: if grid.nodata.is_nan() {
            None
        } else {
            Some(grid.nodata)
        },
        quantity: quantity.map(str::to_owned),
        metadata: meta.clone(),
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, text + "\n").map_err(|e| Error::io(&json_path, e))
}

pub fn read_raster(path: &Path) -> Result<(RasterGrid, SceneMetadata)> {
    let (bin_path, json_path) = raster_paths(path);
    if !json_path.exists() {
        return Err(Error::SidecarNotFound(json_path));
    }
    if !bin_path.exists() {
        return Err(Error::PayloadNotFound(bin_path));
    }
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let probe: VersionProbe =
        serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: json_path,
            found: probe.format_version,
        });
    }
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
    check_dims(sidecar.width, sidecar.height)?;

    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let expected = (sidecar.width * sidecar.height * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::Corrupt {
            path: bin_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let grid = RasterGrid::new(sidecar.width, sidecar.height, values)?
        .with_pixel_spacing(sidecar.pixel_spacing)?
        .with_nodata(sidecar.nodata.unwrap_or(f32::NAN));
    Ok((grid, sidecar.metadata))
}

pub fn write_mask(mask: &BinaryMask, meta: &SceneMetadata, path: &Path) -> Result<()> {
    let grid = mask.to_grid(meta.pixel_spacing)?;
    write_raster_tagged(&grid, meta, path, Some("mask"))
}

pub fn read_mask(path: &Path) -> Result<(BinaryMask, SceneMetadata)> {
    let (grid, meta) = read_raster(path)?;
    Ok((BinaryMask::from_grid(&grid)?, meta))
}

/// Writes an 8-bit grayscale PNG of a linear-power grid, mapping the clamped
/// dB range `[low, high]` linearly onto `[0, 255]`. Nodata maps to 0.
pub fn export_png(grid: &RasterGrid, db_range: (f64, f64), path: &Path) -> Result<()> {
    let (low, high) = db_range;
    if !(low < high) {
        return Err(Error::Config(format!(
            "PNG dB range must satisfy low < high, got ({low}, {high})"
        )));
    }
    let pixels = png_levels(grid, low, high);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), grid.width as u32, grid.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| {
        Error::io(path, std::io::Error::other(e.to_string()))
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(&pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)?;
    Ok(())
}

pub(crate) fn png_levels(grid: &RasterGrid, low: f64, high: f64) -> Vec<u8> {
    grid.values
        .iter()
        .map(|&v| {
            if grid.is_nodata(v) {
                return 0;
            }
            let db = if v > 0.0 { to_db(v as f64) } else { f64::NEG_INFINITY };
            let t = ((db - low) / (high - low)).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect()
}

/// Writes pretty JSON followed by a newline.
pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
