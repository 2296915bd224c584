//! Robust per-row statistics over cubes.

use super::image::BinaryMask;
use crate::pixcodec::ImageCube;

/// One entry per cube row; `None` marks a row with no contributing pixel,
/// otherwise one value per channel.
pub type RowValues = Vec<Option<Vec<f64>>>;

/// Linear interpolation between order statistics at `h = (n − 1)·q`.
/// Returns `None` for an empty slice.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

fn per_row<F>(cube: &ImageCube, mut take: F, stat: impl Fn(&[f64]) -> Option<f64>) -> RowValues
where
    F: FnMut(usize, usize) -> bool,
{
    let mut buf = Vec::with_capacity(cube.width);
    (0..cube.height)
        .map(|r| {
            let cols: Vec<usize> = (0..cube.width).filter(|&c| take(r, c)).collect();
            if cols.is_empty() {
                return None;
            }
            Some(
                (0..cube.channels)
                    .map(|ch| {
                        buf.clear();
                        buf.extend(cols.iter().map(|&c| cube.get(r, c, ch) as f64));
                        stat(&buf).expect("non-empty row")
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Per-row, per-channel `q`-quantile over the pixels selected by `mask`.
pub fn row_quantile(cube: &ImageCube, mask: &BinaryMask, q: f64) -> RowValues {
    assert_eq!((mask.height, mask.width), (cube.height, cube.width));
    per_row(cube, |r, c| mask.get(r, c), |v| quantile(v, q))
}

/// Per-row, per-channel median over whole rows; rows where `row_filter` is
/// false are reported absent.
pub fn row_median(cube: &ImageCube, row_filter: impl Fn(usize) -> bool) -> RowValues {
    per_row(cube, |r, _| row_filter(r), median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixcodec::Modality;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn third_quartile_interpolates() {
        assert_eq!(quantile(&[3.0, 0.0, 2.0, 1.0], 0.75), Some(2.25));
        assert_eq!(quantile(&[4.5], 0.75), Some(4.5));
        assert_eq!(quantile(&[2.0; 7], 0.75), Some(2.0));
        assert_eq!(quantile(&[], 0.75), None);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[1.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
    }

    #[test]
    fn median_matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.random_range(1..30);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut s = v.clone();
            s.sort_by(f64::total_cmp);
            let oracle = if n % 2 == 1 {
                s[n / 2]
            } else {
                (s[n / 2 - 1] + s[n / 2]) / 2.0
            };
            assert!((median(&v).unwrap() - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn row_quantile_respects_mask() {
        let mut cube = ImageCube::zeros(2, 5, 2, 8, Modality::Rgb);
        for c in 0..5 {
            cube.set(0, c, 0, c as f32);
            cube.set(0, c, 1, 9.0);
        }
        let mask = BinaryMask::from_fn(2, 5, |r, c| r == 0 && c < 4);
        let rows = row_quantile(&cube, &mask, 0.75);
        assert_eq!(rows[0], Some(vec![2.25, 9.0]));
        assert_eq!(rows[1], None);
    }

    #[test]
    fn row_median_filter() {
        let mut cube = ImageCube::zeros(3, 4, 1, 12, Modality::Hsi);
        for c in 0..4 {
            cube.set(1, c, 0, (c + 1) as f32);
        }
        let rows = row_median(&cube, |r| r >= 1);
        assert_eq!(rows, vec![None, Some(vec![2.5]), Some(vec![0.0])]);
    }
}
