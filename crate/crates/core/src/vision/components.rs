//! Connected-component labeling.

use super::image::BinaryMask;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// 1-based label, in order of first scanned pixel.
    pub label: u32,
    pub area: usize,
    /// Row-major index of the first pixel met by the scan.
    pub first_index: usize,
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
    pub row_sum: f64,
    pub col_sum: f64,
}

impl Region {
    /// Mean `(x, y)` of member pixels.
    pub fn centroid(&self) -> (f64, f64) {
        (self.col_sum / self.area as f64, self.row_sum / self.area as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Components {
    pub height: usize,
    pub width: usize,
    /// Per-pixel label, 0 for background.
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl Components {
    pub fn mask_of(&self, label: u32) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Row-major pixel indices of one region.
    pub fn pixels_of(&self, label: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Components {
    let (h, w) = (mask.height, mask.width);
    let mut labels = vec![0u32; h * w];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
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
    };
    for start in 0..h * w {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        let (r0, c0) = (start / w, start % w);
        let mut region = Region {
            label,
            area: 0,
            first_index: start,
            row_min: r0,
            row_max: r0,
            col_min: c0,
            col_max: c0,
            row_sum: 0.0,
            col_sum: 0.0,
        };
        labels[start] = label;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (r, c) = (k / w, k % w);
            region.area += 1;
            region.row_min = region.row_min.min(r);
            region.row_max = region.row_max.max(r);
            region.col_min = region.col_min.min(c);
            region.col_max = region.col_max.max(c);
            region.row_sum += r as f64;
            region.col_sum += c as f64;
            for &(dr, dc) in offsets {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if mask.bits[n] && labels[n] == 0 {
                    labels[n] = label;
                    stack.push(n);
                }
            }
        }
        regions.push(region);
    }
    Components {
        height: h,
        width: w,
        labels,
        regions,
    }
}

/// Union of the `k` largest regions; equal areas prefer the region scanned first.
pub fn largest_components(components: &Components, k: usize) -> Result<BinaryMask> {
    if components.regions.len() < k {
        return Err(Error::InsufficientRegions {
            needed: k,
            found: components.regions.len(),
        });
    }
    let mut order: Vec<&Region> = components.regions.iter().collect();
    order.sort_by(|a, b| b.area.cmp(&a.area).then(a.first_index.cmp(&b.first_index)));
    let mut keep = vec![false; components.regions.len() + 1];
    for r in order.into_iter().take(k) {
        keep[r.label as usize] = true;
    }
    Ok(BinaryMask {
        height: components.height,
        width: components.width,
        bits: components.labels.iter().map(|&l| keep[l as usize]).collect(),
    })
}
