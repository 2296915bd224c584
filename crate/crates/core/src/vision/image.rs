use crate::geometry::Point2;
use crate::pixcodec::ImageCube;

/// Single-channel real image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// Bilinear sample at a continuous position (pixel centers on integers),
    /// clamped to the image.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
        let bot = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn sample_point(&self, p: Point2) -> f64 {
        self.sample(p.x, p.y)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Boolean raster with the dimensions of the image it was derived from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.bits[row * self.width + col] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        }
    }

    /// Intersection over union; 1 for two empty masks.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Tight `(row_min, row_max, col_min, col_max)` hull of set pixels, inclusive.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bb = Some(match bb {
                        None => (r, r, c, c),
                        Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                    });
                }
            }
        }
        bb
    }

    /// Row flags: true where the row holds at least one set pixel.
    pub fn occupied_rows(&self) -> Vec<bool> {
        (0..self.height)
            .map(|r| self.bits[r * self.width..(r + 1) * self.width].iter().any(|&b| b))
            .collect()
    }
}

/// Unweighted per-pixel mean over channels.
pub fn grayscale(cube: &ImageCube) -> GrayImage {
    let c = cube.channels as f64;
    GrayImage {
        height: cube.height,
        width: cube.width,
        data: cube
            .data
            .chunks_exact(cube.channels)
            .map(|px| px.iter().map(|&v| v as f64).sum::<f64>() / c)
            .collect(),
    }
}

/// Set where intensity is strictly above `threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryMask {
    BinaryMask {
        height: img.height,
        width: img.width,
        bits: img.data.iter().map(|&v| v > threshold).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixcodec::Modality;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grayscale_mean() {
        let cube = ImageCube::from_data(1, 1, 3, 8, Modality::Rgb, vec![30.0, 60.0, 90.0]).unwrap();
        assert_eq!(grayscale(&cube).data, vec![60.0]);
        let constant = ImageCube::from_data(2, 2, 3, 8, Modality::Rgb, vec![7.0; 12]).unwrap();
        assert!(grayscale(&constant).data.iter().all(|&v| v == 7.0));
    }

    #[test]
    fn grayscale_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f32> = (0..36).map(|_| rng.random_range(0..4096) as f32).collect();
        let cube = ImageCube::from_data(3, 3, 4, 12, Modality::Hsi, data.clone()).unwrap();
        let g = grayscale(&cube);
        for r in 0..3 {
            for c in 0..3 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += data[(r * 3 + c) * 4 + k] as f64;
                }
                assert!((g.get(r, c) - s / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binarize_cases() {
        let img = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        assert!(binarize(&img, 100.0).is_empty());
        assert_eq!(binarize(&img, -1.0).count(), 16);
        let m = binarize(&img, 7.0);
        for (k, &b) in m.bits.iter().enumerate() {
            assert_eq!(b, img.data[k] > 7.0);
        }
    }

    #[test]
    fn bilinear_sample_interpolates() {
        let img = GrayImage::from_fn(3, 3, |r, c| (r * 10 + c) as f64);
        assert!((img.sample(0.5, 1.5) - 15.5).abs() < 1e-12);
        assert_eq!(img.sample(-3.0, 0.0), 0.0);
    }
}
