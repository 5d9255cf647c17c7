//! Connected-component labeling and slick instances.

use serde::{Deserialize, Serialize};

use crate::raster::{pixels_to_hm2, BinaryMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    pub fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    GroundTruth,
    Baseline,
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlickKind {
    Spill,
    Seep,
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub r0: u32,
    pub c0: u32,
    pub r1: u32,
    pub c1: u32,
}

impl BBox {
    pub fn height(&self) -> u32 {
        self.r1 - self.r0 + 1
    }

    pub fn width(&self) -> u32 {
        self.c1 - self.c0 + 1
    }

    /// Long side over short side.
    pub fn aspect_ratio(&self) -> f64 {
        let (h, w) = (self.height() as f64, self.width() as f64);
        h.max(w) / h.min(w)
    }

    pub fn of_pixels(pixels: &[(u32, u32)]) -> Option<Self> {
        let (&(r, c), rest) = pixels.split_first()?;
        let mut b = BBox {
            r0: r,
            c0: c,
            r1: r,
            c1: c,
        };
        for &(r, c) in rest {
            b.r0 = b.r0.min(r);
            b.r1 = b.r1.max(r);
            b.c0 = b.c0.min(c);
            b.c1 = b.c1.max(c);
        }
        Some(b)
    }
}

/// One connected slick region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlickInstance {
    pub id: u32,
    /// `(row, col)` in row-major order.
    pub pixels: Vec<(u32, u32)>,
    pub area_hm2: f64,
    pub bbox: BBox,
    pub source: InstanceSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SlickKind>,
}

impl SlickInstance {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

/// Labels foreground components. Returns a label per pixel (0 = background,
/// components numbered from 1 in raster order of their first pixel) and the
/// component count.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    // Only already-visited neighbours matter in the first pass.
    let back: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (0, -1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
    };
    for r in 0..h {
        for c in 0..w {
            if !bits[r * w + c] {
                continue;
            }
            let mut label = 0u32;
            for &(dr, dc) in back {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nc >= w as isize {
                    continue;
                }
                let n = provisional[nr as usize * w + nc as usize];
                if n == 0 {
                    continue;
                }
                if label == 0 {
                    label = find(&mut parent, n);
                } else {
                    let (a, b) = (find(&mut parent, label), find(&mut parent, n));
                    if a != b {
                        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                        parent[hi as usize] = lo;
                        label = lo;
                    }
                }
            }
            if label == 0 {
                label = parent.len() as u32;
                parent.push(label);
            }
            provisional[r * w + c] = label;
        }
    }

    // Renumber roots in order of first appearance.
    let mut final_of_root = vec![0u32; parent.len()];
    let mut next = 0u32;
    for v in provisional.iter_mut() {
        if *v == 0 {
            continue;
        }
        let root = find(&mut parent, *v) as usize;
        if final_of_root[root] == 0 {
            next += 1;
            final_of_root[root] = next;
        }
        *v = final_of_root[root];
    }
    (provisional, next)
}

/// One instance per connected component, sorted by the top-left corner of the
/// bounding box (ties broken by first pixel in raster order), ids from 1.
pub fn instances_from_mask(
    mask: &BinaryMask,
    pixel_spacing: f64,
    connectivity: Connectivity,
    source: InstanceSource,
) -> Vec<SlickInstance> {
    let (labels, count) = label_components(mask, connectivity);
    let w = mask.width();
    let mut groups: Vec<Vec<(u32, u32)>> = vec![Vec::new(); count as usize];
    for (i, &l) in labels.iter().enumerate() {
        if l > 0 {
            groups[(l - 1) as usize].push(((i / w) as u32, (i % w) as u32));
        }
    }
    let mut keyed: Vec<((u32, u32, usize), Vec<(u32, u32)>)> = groups
        .into_iter()
        .map(|px| {
            let b = BBox::of_pixels(&px).expect("components are non-empty");
            let first = px[0].0 as usize * w + px[0].1 as usize;
            ((b.r0, b.c0, first), px)
        })
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    keyed
        .into_iter()
        .enumerate()
        .map(|(i, (_, pixels))| SlickInstance {
            id: i as u32 + 1,
            area_hm2: pixels_to_hm2(pixels.len(), pixel_spacing),
            bbox: BBox::of_pixels(&pixels).expect("non-empty"),
            pixels,
            source,
            kind: None,
        })
        .collect()
}

/// Rasterizes instance pixels back into a mask.
pub fn mask_from_instances(width: usize, height: usize, instances: &[SlickInstance]) -> BinaryMask {
    let mut mask = BinaryMask::new(width, height);
    for inst in instances {
        for &(r, c) in &inst.pixels {
            mask.set(r as usize, c as usize, true);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for &(r, c) in on {
            m.set(r, c, true);
        }
        m
    }

    #[test]
    fn empty_mask_no_instances() {
        let m = BinaryMask::new(8, 8);
        assert!(instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::Baseline).is_empty());
    }

    #[test]
    fn diagonal_touch_is_one_instance() {
        let m = mask(4, 4, &[(1, 1), (2, 2)]);
        let eight = instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::Baseline);
        assert_eq!(eight.len(), 1);
        assert_eq!(eight[0].pixels, vec![(1, 1), (2, 2)]);
        assert!((eight[0].area_hm2 - 0.02).abs() < 1e-15);
        let four = instances_from_mask(&m, 10.0, Connectivity::Four, InstanceSource::Baseline);
        assert_eq!(four.len(), 2);
    }

    #[test]
    fn u_shape_merges() {
        // Two prongs joined at the bottom: provisional labels must merge.
        let m = mask(5, 3, &[(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (2, 3), (2, 4), (1, 4), (0, 4)]);
        let inst = instances_from_mask(&m, 10.0, Connectivity::Four, InstanceSource::Baseline);
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].bbox, BBox { r0: 0, c0: 0, r1: 2, c1: 4 });
    }

    #[test]
    fn sorted_by_bbox_corner() {
        let m = mask(6, 6, &[(4, 0), (0, 5), (0, 3)]);
        let inst = instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::Baseline);
        let corners: Vec<_> = inst.iter().map(|i| (i.bbox.r0, i.bbox.c0)).collect();
        assert_eq!(corners, vec![(0, 3), (0, 5), (4, 0)]);
        assert_eq!(inst.iter().map(|i| i.id).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    fn bfs_labels(m: &BinaryMask) -> Vec<Vec<(u32, u32)>> {
        let (w, h) = m.dims();
        let mut seen = vec![false; w * h];
        let mut out = Vec::new();
        for start in 0..w * h {
            if !m.bits()[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut q = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = q.pop_front() {
                let (r, c) = (i / w, i % w);
                comp.push((r as u32, c as u32));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let j = nr as usize * w + nc as usize;
                        if m.bits()[j] && !seen[j] {
                            seen[j] = true;
                            q.push_back(j);
                        }
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out.sort();
        out
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn partition_and_oracle(bits in proptest::collection::vec(proptest::bool::weighted(0.4), 24 * 20)) {
                let m = BinaryMask::from_bits(24, 20, bits).unwrap();
                let inst = instances_from_mask(&m, 10.0, Connectivity::Eight, InstanceSource::Baseline);
                prop_assert_eq!(mask_from_instances(24, 20, &inst), m.clone());
                let mut ours: Vec<Vec<(u32, u32)>> = inst.into_iter().map(|i| i.pixels).collect();
                ours.sort();
                prop_assert_eq!(ours, bfs_labels(&m));
            }
        }
    }
}
