//! Otsu threshold selection.

use super::image::GrayImage;
use crate::{Error, Result};

/// Result of [`otsu_threshold`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    /// Intensity separating the classes: `v > threshold` is foreground.
    pub threshold: f64,
    /// Last histogram bin of the background class.
    pub bin: usize,
}

/// `(hi, lo)` of the full 256-bit product.
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & MASK);
    let (b1, b0) = (b >> 64, b & MASK);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & MASK) + (p10 & MASK);
    let lo = (p00 & MASK) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

/// Between-class variance of one split as the exact fraction
/// `(N·s0 − n0·S)² / (n0·n1)` (the common `N²` factor dropped).
#[derive(Clone, Copy)]
enum Score {
    Exact { num: u128, den: u128 },
    Approx(f64),
}

impl Score {
    fn new(total_n: u128, total_s: u128, n0: u128, s0: u128) -> Score {
        let n1 = total_n - n0;
        let approx = || {
            let d = total_n as f64 * s0 as f64 - n0 as f64 * total_s as f64;
            Score::Approx(d * d / (n0 as f64 * n1 as f64))
        };
        let (Some(a), Some(b), Some(den)) = (
            total_n.checked_mul(s0),
            n0.checked_mul(total_s),
            n0.checked_mul(n1),
        ) else {
            return approx();
        };
        let diff = a.abs_diff(b);
        match diff.checked_mul(diff) {
            Some(num) => Score::Exact { num, den },
            None => approx(),
        }
    }

    fn as_f64(self) -> f64 {
        match self {
            Score::Exact { num, den } => num as f64 / den as f64,
            Score::Approx(v) => v,
        }
    }

    fn greater_than(self, other: Score) -> bool {
        match (self, other) {
            (Score::Exact { num: a, den: b }, Score::Exact { num: c, den: d }) => {
                mul_wide(a, d) > mul_wide(c, b)
            }
            _ => self.as_f64() > other.as_f64(),
        }
    }
}

/// Split index `k` maximizing the between-class variance of
/// `bins[..=k]` versus `bins[k+1..]`; ties go to the lowest `k`.
///
/// Splits with an empty class are not candidates, so a histogram with fewer
/// than two occupied bins is degenerate.
pub fn otsu_bin(hist: &[u64]) -> Result<usize> {
    let total_n: u128 = hist.iter().map(|&h| h as u128).sum();
    let total_s: u128 = hist.iter().enumerate().map(|(i, &h)| i as u128 * h as u128).sum();
    let mut n0 = 0u128;
    let mut s0 = 0u128;
    let mut best: Option<(usize, Score)> = None;
    for (k, &h) in hist.iter().enumerate() {
        n0 += h as u128;
        s0 += k as u128 * h as u128;
        if n0 == 0 || n0 == total_n {
            continue;
        }
        let score = Score::new(total_n, total_s, n0, s0);
        match best {
            Some((_, b)) if !score.greater_than(b) => {}
            _ => best = Some((k, score)),
        }
    }
    best.map(|(k, _)| k).ok_or(Error::DegenerateHistogram)
}

/// Otsu threshold of an image over a `bins`-bin histogram spanning its
/// value range.
///
/// The returned threshold lies halfway between the brightest background
/// sample and the darkest foreground sample, so [`super::binarize`]
/// reproduces the histogram split exactly.
pub fn otsu_threshold(img: &GrayImage, bins: usize) -> Result<OtsuThreshold> {
    let bins = bins.max(2);
    let (lo, hi) = img.min_max();
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::DegenerateHistogram);
    }
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| (((v - lo) / width) as usize).min(bins - 1);
    let mut hist = vec![0u64; bins];
    for &v in &img.data {
        hist[bin_of(v)] += 1;
    }
    let bin = otsu_bin(&hist)?;
    let mut bg_max = f64::NEG_INFINITY;
    let mut fg_min = f64::INFINITY;
    for &v in &img.data {
        if bin_of(v) <= bin {
            bg_max = bg_max.max(v);
        } else {
            fg_min = fg_min.min(v);
        }
    }
    Ok(OtsuThreshold {
        threshold: 0.5 * (bg_max + fg_min),
        bin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// ω0·ω1·(μ0 − μ1)² from direct class means, in exact rationals.
    fn brute_force_bin(hist: &[u64]) -> Option<usize> {
        let big = |v: u64| BigRational::from_integer(BigInt::from(v));
        let total: u64 = hist.iter().sum();
        let mut best: Option<(usize, BigRational)> = None;
        for k in 0..hist.len() {
            let (c0, c1) = hist.split_at(k + 1);
            let n0: u64 = c0.iter().sum();
            let n1: u64 = c1.iter().sum();
            if n0 == 0 || n1 == 0 {
                continue;
            }
            let m0 = big(c0.iter().enumerate().map(|(i, &h)| i as u64 * h).sum()) / big(n0);
            let m1 = big(c1.iter().enumerate().map(|(i, &h)| (i + k + 1) as u64 * h).sum())
                / big(n1);
            let d = m0 - m1;
            let var = big(n0) / big(total) * (big(n1) / big(total)) * d.clone() * d;
            if best.as_ref().is_none_or(|(_, b)| var > *b) {
                best = Some((k, var));
            }
        }
        best.map(|(k, _)| k)
    }

    #[test]
    fn perfect_bimodal() {
        let mut data = vec![0.1; 10];
        data.extend(vec![0.9; 10]);
        let img = GrayImage {
            height: 4,
            width: 5,
            data,
        };
        let t = otsu_threshold(&img, 256).unwrap();
        assert!(t.threshold > 0.1 && t.threshold < 0.9);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let img = GrayImage::filled(3, 3, 0.4);
        assert!(matches!(otsu_threshold(&img, 64), Err(Error::DegenerateHistogram)));
        assert!(otsu_bin(&[0, 5, 0]).is_err());
    }

    #[test]
    fn random_images_match_exhaustive_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let img = GrayImage::from_fn(8, 8, |_, _| rng.random_range(0..256) as f64);
            let bins = 256;
            let t = otsu_threshold(&img, bins).unwrap();
            let (lo, hi) = img.min_max();
            let w = (hi - lo) / bins as f64;
            let mut hist = vec![0u64; bins];
            for &v in &img.data {
                hist[(((v - lo) / w) as usize).min(bins - 1)] += 1;
            }
            assert_eq!(Some(t.bin), brute_force_bin(&hist));
        }
    }

    #[test]
    fn leading_empty_bins_shift_the_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let hist: Vec<u64> = (0..64).map(|_| rng.random_range(0..40)).collect();
            let k = otsu_bin(&hist).unwrap();
            let mut shifted = vec![0u64; 7];
            shifted.extend_from_slice(&hist);
            assert_eq!(otsu_bin(&shifted).unwrap(), k + 7);
        }
    }

    #[test]
    fn intensity_offset_shifts_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = GrayImage::from_fn(10, 10, |_, _| rng.random_range(0.0..1.0));
        let moved = GrayImage {
            data: img.data.iter().map(|v| v + 2.0).collect(),
            ..img.clone()
        };
        let a = otsu_threshold(&img, 128).unwrap();
        let b = otsu_threshold(&moved, 128).unwrap();
        assert_eq!(a.bin, b.bin);
        assert!((b.threshold - a.threshold - 2.0).abs() < 1e-9);
    }

    #[test]
    fn wide_multiply() {
        let (hi, lo) = mul_wide(u128::MAX, u128::MAX);
        assert_eq!(hi, u128::MAX - 1);
        assert_eq!(lo, 1);
        assert_eq!(mul_wide(3, 5), (0, 15));
    }

    #[test]
    fn huge_counts_fall_back_without_panicking() {
        let hist = [u64::MAX / 4, 0, 0, u64::MAX / 4];
        assert_eq!(otsu_bin(&hist).unwrap(), 0);
    }
}
