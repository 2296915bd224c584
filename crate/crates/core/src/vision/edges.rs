//! Gradient-magnitude edges with non-maximum suppression and hysteresis.

use serde::{Deserialize, Serialize};

use super::filter::reflect;
use super::image::{BinaryMask, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    /// Weak-edge gradient magnitude (per pixel, Sobel normalized by 8).
    pub low: f64,
    /// Strong-edge gradient magnitude.
    pub high: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            low: 0.02,
            high: 0.05,
        }
    }
}

/// Sobel derivatives, normalized so a unit ramp has gradient 1.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub height: usize,
    pub width: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl Gradient {
    pub fn of(img: &GrayImage) -> Gradient {
        let (h, w) = (img.height, img.width);
        let mut gx = vec![0.0; h * w];
        let mut gy = vec![0.0; h * w];
        let at = |r: isize, c: isize| img.get(reflect(r, h), reflect(c, w));
        for r in 0..h as isize {
            for c in 0..w as isize {
                let k = r as usize * w + c as usize;
                gx[k] = ((at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1)))
                    / 8.0;
                gy[k] = ((at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                    - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1)))
                    / 8.0;
            }
        }
        Gradient {
            height: h,
            width: w,
            gx,
            gy,
        }
    }

    #[inline]
    pub fn magnitude(&self, k: usize) -> f64 {
        self.gx[k].hypot(self.gy[k])
    }
}

pub fn edge_detect(img: &GrayImage, params: &EdgeParams) -> BinaryMask {
    edge_detect_with_gradient(img, params).0
}

/// Edge mask plus the gradient it was computed from.
pub fn edge_detect_with_gradient(img: &GrayImage, params: &EdgeParams) -> (BinaryMask, Gradient) {
    let grad = Gradient::of(img);
    let (h, w) = (img.height, img.width);
    let mag: Vec<f64> = (0..h * w).map(|k| grad.magnitude(k)).collect();

    // Thin to ridge pixels along the quantized gradient direction; ties keep
    // the pixel on the lower-index side so a symmetric step yields one line.
    let mut thin = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            let m = mag[k];
            if m < params.low {
                continue;
            }
            let angle = grad.gy[k].atan2(grad.gx[k]).rem_euclid(std::f64::consts::PI);
            let sector = ((angle / (std::f64::consts::PI / 4.0)).round() as usize) % 4;
            let (dr, dc): (isize, isize) = match sector {
                0 => (0, 1),
                1 => (1, 1),
                2 => (1, 0),
                _ => (1, -1),
            };
            let neighbor = |s: isize| {
                let (nr, nc) = (r as isize + s * dr, c as isize + s * dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    0.0
                } else {
                    mag[nr as usize * w + nc as usize]
                }
            };
            if m > neighbor(-1) && m >= neighbor(1) {
                thin[k] = m;
            }
        }
    }

    let mut mask = BinaryMask::new(h, w);
    let mut stack: Vec<usize> = Vec::new();
    for k in 0..h * w {
        if thin[k] >= params.high {
            mask.bits[k] = true;
            stack.push(k);
        }
    }
    while let Some(k) = stack.pop() {
        let (r, c) = ((k / w) as isize, (k % w) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if !mask.bits[n] && thin[n] >= params.low {
                    mask.bits[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    (mask, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::gaussian_smooth;

    #[test]
    fn constant_has_no_edges() {
        let img = GrayImage::filled(20, 20, 0.6);
        assert!(edge_detect(&img, &EdgeParams::default()).is_empty());
    }

    #[test]
    fn vertical_step() {
        let img = GrayImage::from_fn(30, 40, |_, c| if c < 20 { 0.1 } else { 0.9 });
        let smooth = gaussian_smooth(&img, 1.5);
        let edges = edge_detect(&smooth, &EdgeParams::default());
        for r in 0..30 {
            let cols: Vec<usize> = (0..40).filter(|&c| edges.get(r, c)).collect();
            assert_eq!(cols.len(), 1, "row {r}: {cols:?}");
            assert!((cols[0] as f64 - 19.5).abs() <= 1.0);
        }
    }

    #[test]
    fn circle_outline_recovered() {
        let (cx, cy, rad) = (40.0, 36.0, 22.0);
        // 4x4 supersampled disk.
        let img = GrayImage::from_fn(80, 80, |r, c| {
            let mut cov = 0.0;
            for sy in 0..4 {
                for sx in 0..4 {
                    let x = c as f64 + (sx as f64 + 0.5) / 4.0 - 0.5;
                    let y = r as f64 + (sy as f64 + 0.5) / 4.0 - 0.5;
                    if (x - cx).hypot(y - cy) <= rad {
                        cov += 1.0 / 16.0;
                    }
                }
            }
            0.1 + 0.8 * cov
        });
        let edges = edge_detect(&gaussian_smooth(&img, 1.2), &EdgeParams::default());
        // Rasterized circle: pixels whose center lies within half a pixel of the boundary.
        let mut total = 0;
        let mut hit = 0;
        for r in 0..80usize {
            for c in 0..80usize {
                let d = (c as f64 - cx).hypot(r as f64 - cy);
                if (d - rad).abs() <= 0.5 {
                    total += 1;
                    let near = (-1..=1).any(|dr: isize| {
                        (-1..=1).any(|dc: isize| {
                            edges.get((r as isize + dr) as usize, (c as isize + dc) as usize)
                        })
                    });
                    hit += near as usize;
                }
            }
        }
        assert!(hit as f64 >= 0.9 * total as f64, "{hit}/{total}");
    }
}
