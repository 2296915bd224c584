//! Horizontal bilinear resampling for anamorphic correction.

use serde::{Deserialize, Serialize};

use crate::pixcodec::ImageCube;
use crate::{Error, Result};

/// Coordinate mapping of a horizontal resize with pixel centers on integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalResize {
    pub src_width: usize,
    pub dst_width: usize,
}

impl HorizontalResize {
    pub fn new(src_width: usize, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "resize factor {factor} outside (0, 1]"
            )));
        }
        let dst_width = ((src_width as f64 * factor).round() as usize).max(1);
        Ok(Self {
            src_width,
            dst_width,
        })
    }

    pub fn identity(width: usize) -> Self {
        Self {
            src_width: width,
            dst_width: width,
        }
    }

    fn ratio(&self) -> f64 {
        self.src_width as f64 / self.dst_width as f64
    }

    /// Source x sampled for destination column `x` (unclamped).
    pub fn to_src_x(&self, x: f64) -> f64 {
        (x + 0.5) * self.ratio() - 0.5
    }

    pub fn to_dst_x(&self, x: f64) -> f64 {
        (x + 0.5) / self.ratio() - 0.5
    }
}

/// Downsizes the width by `factor`, linear interpolation between the two
/// nearest source columns, edges clamped. Height and channels are kept.
pub fn bilinear_resize_horizontal(cube: &ImageCube, factor: f64) -> Result<ImageCube> {
    let map = HorizontalResize::new(cube.width, factor)?;
    if map.dst_width == cube.width {
        return Ok(cube.clone());
    }
    let (w, c) = (cube.width, cube.channels);
    let taps: Vec<(usize, usize, f32)> = (0..map.dst_width)
        .map(|j| {
            let x = map.to_src_x(j as f64).clamp(0.0, (w - 1) as f64);
            let x0 = x.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            (x0, x1, (x - x0 as f64) as f32)
        })
        .collect();
    let mut data = Vec::with_capacity(cube.height * map.dst_width * c);
    for r in 0..cube.height {
        let row = &cube.data[r * w * c..(r + 1) * w * c];
        for &(x0, x1, f) in &taps {
            for ch in 0..c {
                let a = row[x0 * c + ch];
                let b = row[x1 * c + ch];
                data.push(a + (b - a) * f);
            }
        }
    }
    let mut out = cube.clone();
    out.width = map.dst_width;
    out.data = data;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixcodec::Modality;

    fn ramp(width: usize) -> ImageCube {
        let mut cube = ImageCube::zeros(3, width, 2, 12, Modality::Hsi);
        cube.reflectance = true;
        for r in 0..3 {
            for x in 0..width {
                cube.set(r, x, 0, x as f32 * 0.5);
                cube.set(r, x, 1, 7.0);
            }
        }
        cube
    }

    #[test]
    fn unit_factor_is_identity() {
        let cube = ramp(17);
        assert_eq!(bilinear_resize_horizontal(&cube, 1.0).unwrap(), cube);
    }

    #[test]
    fn constant_stays_constant() {
        let out = bilinear_resize_horizontal(&ramp(40), 0.74).unwrap();
        assert_eq!(out.width, 30);
        assert!((0..out.width).all(|x| out.get(1, x, 1) == 7.0));
    }

    #[test]
    fn ramp_matches_closed_form() {
        let w = 101;
        let f = 1.0 / 1.35;
        let out = bilinear_resize_horizontal(&ramp(w), f).unwrap();
        let map = HorizontalResize::new(w, f).unwrap();
        assert_eq!(out.width, (w as f64 * f).round() as usize);
        for j in 0..out.width {
            let x = map.to_src_x(j as f64).clamp(0.0, (w - 1) as f64);
            assert!((out.get(2, j, 0) as f64 - 0.5 * x).abs() < 1e-4);
        }
    }

    #[test]
    fn mapping_round_trips() {
        let map = HorizontalResize::new(640, 0.75).unwrap();
        for x in [0.0, 13.25, 479.0] {
            assert!((map.to_src_x(map.to_dst_x(x)) - x).abs() < 1e-12);
        }
    }

    #[test]
    fn upsizing_rejected() {
        assert!(bilinear_resize_horizontal(&ramp(10), 1.2).is_err());
        assert!(bilinear_resize_horizontal(&ramp(10), 0.0).is_err());
    }
}
