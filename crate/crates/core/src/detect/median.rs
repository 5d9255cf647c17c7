//! Sliding-window median over dB images (Huang's running histogram).
//!
//! Values are quantized to [`DB_STEP`] before ranking. Quantization is
//! monotone, so the window median of the codes is exactly the code of the
//! true median; the returned background is that bin's centre.

use crate::par;

pub const DB_STEP: f64 = 0.01;
pub const DB_MIN: f64 = -100.0;
pub const DB_MAX: f64 = 40.0;
const NODATA_CODE: u16 = u16::MAX;

fn bin_count() -> usize {
    ((DB_MAX - DB_MIN) / DB_STEP).round() as usize
}

/// Histogram bin of a dB value; NaN maps to the nodata sentinel.
pub fn quantize(db: f64) -> u16 {
    if db.is_nan() {
        return NODATA_CODE;
    }
    let last = bin_count() - 1;
    let idx = ((db - DB_MIN) / DB_STEP).floor();
    if idx < 0.0 {
        0
    } else if idx as usize > last {
        last as u16
    } else {
        idx as u16
    }
}

pub fn bin_centre(code: u16) -> f64 {
    DB_MIN + (code as f64 + 0.5) * DB_STEP
}

/// Median of each `window` x `window` neighbourhood, with edge replication.
/// Nodata (NaN) samples are skipped; windows with no valid sample yield NaN.
/// For even valid counts the lower median is taken.
pub fn median_filter_db(db: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "window must be odd");
    assert_eq!(db.len(), width * height);
    let codes: Vec<u16> = db.iter().map(|&v| quantize(v)).collect();
    let half = (window / 2) as isize;
    let clamp_r = |r: isize| r.clamp(0, height as isize - 1) as usize;
    let clamp_c = |c: isize| c.clamp(0, width as isize - 1) as usize;
    let bins = bin_count();

    let mut out = vec![f64::NAN; width * height];
    par::for_each_row(&mut out, width, |r, row| {
        let rows: Vec<usize> = (-half..=half).map(|d| clamp_r(r as isize + d)).collect();
        let mut hist = vec![0u32; bins];
        let mut n = 0usize;
        let mut median = 0usize;
        let mut below = 0usize;

        let add_col = |hist: &mut [u32], n: &mut usize, below: &mut usize, median: usize, c: usize, sign: i32| {
            for &rr in &rows {
                let code = codes[rr * width + c];
                if code == NODATA_CODE {
                    continue;
                }
                let code = code as usize;
                if sign > 0 {
                    hist[code] += 1;
                    *n += 1;
                    if code < median {
                        *below += 1;
                    }
                } else {
                    hist[code] -= 1;
                    *n -= 1;
                    if code < median {
                        *below -= 1;
                    }
                }
            }
        };

        for dc in -half..=half {
            add_col(&mut hist, &mut n, &mut below, median, clamp_c(dc), 1);
        }
        for c in 0..width {
            if c > 0 {
                add_col(&mut hist, &mut n, &mut below, median, clamp_c(c as isize - half - 1), -1);
                add_col(&mut hist, &mut n, &mut below, median, clamp_c(c as isize + half), 1);
            }
            if n == 0 {
                row[c] = f64::NAN;
                continue;
            }
            let k = (n - 1) / 2;
            // Move the pointer until exactly k samples lie strictly below it
            // and the median bin holds the (k+1)-th.
            while below > k {
                median -= 1;
                below -= hist[median] as usize;
            }
            while below + hist[median] as usize <= k {
                below += hist[median] as usize;
                median += 1;
            }
            row[c] = bin_centre(median as u16);
        }
    });
    out
}
