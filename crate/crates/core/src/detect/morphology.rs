//! Binary morphology with disk structuring elements.
//!
//! Out-of-image samples are ignored: erosion does not eat in from the border
//! and dilation does not grow from outside.

use crate::raster::BinaryMask;

/// Offsets `(dr, dc)` with `dr² + dc² <= radius²`.
pub fn disk_offsets(radius: f64) -> Vec<(isize, isize)> {
    let r = radius.floor() as isize;
    let r2 = radius * radius;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if (dr * dr + dc * dc) as f64 <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

fn apply(mask: &BinaryMask, offsets: &[(isize, isize)], erode: bool) -> BinaryMask {
    let (w, h) = mask.dims();
    let src = mask.bits();
    let mut out = vec![false; w * h];
    crate::par::for_each_row(&mut out, w, |r, row| {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut acc = erode;
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let v = src[nr as usize * w + nc as usize];
                if erode && !v {
                    acc = false;
                    break;
                }
                if !erode && v {
                    acc = true;
                    break;
                }
            }
            *cell = acc;
        }
    });
    BinaryMask::from_bits(w, h, out).expect("same dims")
}

pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    apply(mask, &disk_offsets(radius as f64), true)
}

pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    apply(mask, &disk_offsets(radius as f64), false)
}

pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

pub fn close(mask: &BinaryMask, radius: usize) -> BinaryMask {
    erode(&dilate(mask, radius), radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_radius_one_is_cross() {
        let mut d = disk_offsets(1.0);
        d.sort();
        assert_eq!(d, vec![(-1, 0), (0, -1), (0, 0), (0, 1), (1, 0)]);
        assert_eq!(disk_offsets(5.0).len(), 81);
    }

    #[test]
    fn opening_removes_speck_keeps_block() {
        let mut m = BinaryMask::new(12, 12);
        m.set(1, 1, true);
        for r in 5..10 {
            for c in 5..10 {
                m.set(r, c, true);
            }
        }
        let o = open(&m, 1);
        assert!(!o.get(1, 1));
        assert!(o.get(7, 7));
        // Corners of a square are lost by a cross-shaped opening.
        assert!(!o.get(5, 5));
    }

    #[test]
    fn closing_fills_pinhole() {
        let mut m = BinaryMask::new(9, 9);
        for r in 2..7 {
            for c in 2..7 {
                m.set(r, c, true);
            }
        }
        m.set(4, 4, false);
        assert!(close(&m, 1).get(4, 4));
    }
}
