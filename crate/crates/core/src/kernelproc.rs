//! Kernel segmentation inside a cell cut-out and mean pseudo-absorbance
//! spectra of the segmented HSI pixels.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridtrack::CellImage;
use crate::pixcodec::ImageCube;
use crate::vision::{binarize, connected_components, grayscale, largest_components, otsu_threshold, BinaryMask, Connectivity};

/// Channels dropped at each end of an HSI spectrum.
pub const DEFAULT_TRIM: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Log10,
    Ln,
}

impl LogBase {
    fn apply(self, v: f64) -> f64 {
        match self {
            LogBase::Log10 => v.log10(),
            LogBase::Ln => v.ln(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Log10 => "log10",
            LogBase::Ln => "ln",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumParams {
    pub log_base: LogBase,
    pub trim: usize,
    /// Clamp reflectance above 1 to 1 before the logarithm.
    pub clamp_above_one: bool,
    pub otsu_bins: usize,
    pub first_nm: f64,
    pub last_nm: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            log_base: LogBase::Log10,
            trim: DEFAULT_TRIM,
            clamp_above_one: false,
            otsu_bins: 256,
            first_nm: 900.0,
            last_nm: 1700.0,
        }
    }
}

/// Otsu on the channel-mean image, then the largest 8-connected
/// foreground component.
pub fn segment_kernel(cube: &ImageCube, bins: usize) -> Result<BinaryMask> {
    let gray = grayscale(cube);
    let t = otsu_threshold(&gray, bins).map_err(|_| Error::EmptyMask)?;
    let fg = binarize(&gray, t.threshold);
    if fg.is_empty() {
        return Err(Error::EmptyMask);
    }
    let comps = connected_components(&fg, Connectivity::Eight);
    largest_components(&comps, 1).map_err(|_| Error::EmptyMask)
}

/// [`segment_kernel`] restricted to the cell polygon.
pub fn segment_cell(cell: &CellImage, bins: usize) -> Result<BinaryMask> {
    let mask = segment_kernel(&cell.cube, bins)?.and(&cell.mask);
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(mask)
}

/// Replaces non-positive channels by linear interpolation between the
/// nearest positive neighbours; runs at either end copy the nearest
/// positive value.
pub fn repair_zero_reflectance(px: &[f64]) -> Result<Vec<f64>> {
    let good: Vec<usize> = (0..px.len()).filter(|&k| px[k] > 0.0).collect();
    let (Some(&first), Some(&last)) = (good.first(), good.last()) else {
        return Err(Error::DeadPixel);
    };
    let mut out = px.to_vec();
    out[..first].fill(px[first]);
    out[last + 1..].fill(px[last]);
    for w in good.windows(2) {
        let (a, b) = (w[0], w[1]);
        for k in a + 1..b {
            let t = (k - a) as f64 / (b - a) as f64;
            out[k] = px[a] + t * (px[b] - px[a]);
        }
    }
    Ok(out)
}

/// Centre wavelength of channel `k` of `channels` spread uniformly over
/// `[first, last]` nm.
pub fn channel_wavelength(k: usize, channels: usize, first: f64, last: f64) -> f64 {
    if channels < 2 {
        return first;
    }
    first + k as f64 * (last - first) / (channels - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub wavelengths: Vec<f64>,
    pub n_pixels: usize,
    pub dead_pixels: usize,
    pub repaired_pixels: usize,
    pub log_base: LogBase,
}

/// Mean over mask pixels of −log(reflectance), trimmed at both ends.
pub fn mean_pseudo_absorbance(cube: &ImageCube, mask: &BinaryMask, params: &SpectrumParams) -> Result<Spectrum> {
    if mask.height != cube.height || mask.width != cube.width {
        return Err(Error::Invalid(format!(
            "mask {}×{} does not match cube {}×{}",
            mask.height, mask.width, cube.height, cube.width
        )));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let ch = cube.channels;
    if ch <= 2 * params.trim {
        return Err(Error::Invalid(format!("{ch} channels cannot lose {} at each end", params.trim)));
    }
    let mut sum = vec![0.0; ch];
    let (mut n, mut dead, mut repaired) = (0usize, 0usize, 0usize);
    let mut px = vec![0.0; ch];
    for r in 0..cube.height {
        for c in 0..cube.width {
            if !mask.get(r, c) {
                continue;
            }
            for (v, &raw) in px.iter_mut().zip(cube.pixel(r, c)) {
                *v = raw as f64;
            }
            let fixed = match repair_zero_reflectance(&px) {
                Ok(v) => v,
                Err(_) => {
                    dead += 1;
                    continue;
                }
            };
            if px.iter().any(|&v| v <= 0.0) {
                repaired += 1;
            }
            for (s, &v) in sum.iter_mut().zip(&fixed) {
                let v = if params.clamp_above_one { v.min(1.0) } else { v };
                *s -= params.log_base.apply(v);
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DeadPixel);
    }
    if dead > 0 {
        log::warn!("{dead} dead pixels dropped from the spectrum");
    }
    let keep = params.trim..ch - params.trim;
    Ok(Spectrum {
        values: sum[keep.clone()].iter().map(|s| s / n as f64).collect(),
        wavelengths: keep
            .map(|k| channel_wavelength(k, ch, params.first_nm, params.last_nm))
            .collect(),
        n_pixels: n,
        dead_pixels: dead,
        repaired_pixels: repaired,
        log_base: params.log_base,
    })
}

/// Provenance written next to a spectrum CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub dish: String,
    pub day: u32,
    pub cell: (usize, usize),
    pub n_pixels: usize,
    pub log_base: LogBase,
    pub dead_pixels: usize,
}

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("wavelength_nm,absorbance\n");
        for (w, v) in self.wavelengths.iter().zip(&self.values) {
            let _ = writeln!(s, "{w},{v}");
        }
        s
    }

    /// Parses the CSV written by [`Spectrum::to_csv`]; counts are not stored
    /// there and come back as zero.
    pub fn from_csv(text: &str, log_base: LogBase) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("wavelength_nm,absorbance") {
            return Err(Error::Format("spectrum CSV header must be `wavelength_nm,absorbance`".into()));
        }
        let (mut wavelengths, mut values) = (Vec::new(), Vec::new());
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::Format(format!("spectrum CSV row {}: `{line}`", i + 2));
            let (w, v) = line.split_once(',').ok_or_else(bad)?;
            wavelengths.push(w.trim().parse::<f64>().map_err(|_| bad())?);
            values.push(v.trim().parse::<f64>().map_err(|_| bad())?);
        }
        Ok(Self {
            values,
            wavelengths,
            n_pixels: 0,
            dead_pixels: 0,
            repaired_pixels: 0,
            log_base,
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str, dish: &str, day: u32, cell: (usize, usize)) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let meta = SpectrumMeta {
            dish: dish.to_string(),
            day,
            cell,
            n_pixels: self.n_pixels,
            log_base: self.log_base,
            dead_pixels: self.dead_pixels,
        };
        let json = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::json(&json, e))?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixcodec::Modality;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_from(h: usize, w: usize, ch: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> ImageCube {
        let mut data = Vec::with_capacity(h * w * ch);
        for r in 0..h {
            for c in 0..w {
                for k in 0..ch {
                    data.push(f(r, c, k));
                }
            }
        }
        ImageCube {
            reflectance: true,
            data,
            ..ImageCube::zeros(h, w, ch, 12, Modality::Hsi)
        }
    }

    fn ellipse(p: (f64, f64), c: (f64, f64), a: f64, b: f64, ang: f64) -> bool {
        let (dx, dy) = (p.0 - c.0, p.1 - c.1);
        let (u, v) = (dx * ang.cos() + dy * ang.sin(), -dx * ang.sin() + dy * ang.cos());
        (u / a).powi(2) + (v / b).powi(2) <= 1.0
    }

    /// Area fraction of a pixel inside the ellipse, 8×8 sub-samples.
    fn coverage(r: usize, c: usize, e: impl Fn((f64, f64)) -> bool) -> f64 {
        let mut n = 0;
        for a in 0..8 {
            for b in 0..8 {
                let p = (c as f64 - 0.4375 + a as f64 * 0.125, r as f64 - 0.4375 + b as f64 * 0.125);
                n += e(p) as usize;
            }
        }
        n as f64 / 64.0
    }

    #[test]
    fn ellipse_segmentation_iou() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = (rng.random_range(18.0..22.0), rng.random_range(18.0..22.0));
            let (a, b) = (rng.random_range(8.0..12.0), rng.random_range(4.0..6.0));
            let ang = rng.random_range(0.0..std::f64::consts::PI);
            let inside = |p| ellipse(p, c, a, b, ang);
            let noise = 0.02;
            let cube = cube_from(40, 40, 3, |r, col, _| {
                let f = coverage(r, col, inside);
                (0.08 + 0.5 * f + rng.random_range(-noise..noise)) as f32
            });
            let mask = segment_kernel(&cube, 256).unwrap();
            let truth = BinaryMask::from_fn(40, 40, |r, col| inside((col as f64, r as f64)));
            assert!(mask.iou(&truth) >= 0.95, "iou {}", mask.iou(&truth));
        }
    }

    #[test]
    fn glint_blob_is_dropped() {
        let inside = |p| ellipse(p, (18.0, 20.0), 10.0, 5.0, 0.3);
        let glint = |p: (f64, f64)| (p.0 - 33.0).powi(2) + (p.1 - 8.0).powi(2) <= 4.0;
        let cube = cube_from(40, 40, 2, |r, c, _| {
            let p = (c as f64, r as f64);
            if glint(p) {
                0.95
            } else if inside(p) {
                0.5
            } else {
                0.05
            }
        });
        let mask = segment_kernel(&cube, 256).unwrap();
        assert!(!mask.get(8, 33));
        assert!(mask.get(20, 18));
    }

    #[test]
    fn dark_cell_is_an_error() {
        let cube = cube_from(10, 10, 3, |_, _, _| 0.0);
        assert!(matches!(segment_kernel(&cube, 256), Err(Error::EmptyMask)));
    }

    #[test]
    fn repair_examples() {
        assert_eq!(repair_zero_reflectance(&[0.5, 0.0, 0.3]).unwrap()[1], 0.4);
        assert_eq!(repair_zero_reflectance(&[0.0, 0.2, 0.2]).unwrap(), vec![0.2, 0.2, 0.2]);
        assert_eq!(repair_zero_reflectance(&[0.2, 0.3, 0.0, 0.0]).unwrap(), vec![0.2, 0.3, 0.3, 0.3]);
        assert!(matches!(repair_zero_reflectance(&[0.0, 0.0]), Err(Error::DeadPixel)));
        assert!(matches!(repair_zero_reflectance(&[]), Err(Error::DeadPixel)));
    }

    /// Piecewise-linear interpolant through the positive samples,
    /// evaluated in closed form per channel.
    fn oracle(px: &[f64], k: usize) -> f64 {
        if px[k] > 0.0 {
            return px[k];
        }
        let left = (0..k).rev().find(|&i| px[i] > 0.0);
        let right = (k + 1..px.len()).find(|&i| px[i] > 0.0);
        match (left, right) {
            (Some(a), Some(b)) => px[a] * (b - k) as f64 / (b - a) as f64 + px[b] * (k - a) as f64 / (b - a) as f64,
            (Some(a), None) => px[a],
            (None, Some(b)) => px[b],
            (None, None) => unreachable!(),
        }
    }

    #[test]
    fn repair_matches_piecewise_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let n = rng.random_range(2..60);
            let mut px: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.2)).collect();
            for _ in 0..rng.random_range(1..4) {
                let len = rng.random_range(1..=4.min(n - 1));
                let start = rng.random_range(0..=n - len);
                px[start..start + len].fill(if rng.random_bool(0.5) { 0.0 } else { -0.01 });
            }
            if px.iter().all(|&v| v <= 0.0) {
                continue;
            }
            let out = repair_zero_reflectance(&px).unwrap();
            for k in 0..n {
                assert!((out[k] - oracle(&px, k)).abs() < 1e-9);
                if px[k] > 0.0 {
                    assert_eq!(out[k], px[k]);
                }
            }
        }
    }

    #[test]
    fn uniform_tenth_is_unit_absorbance() {
        let cube = cube_from(6, 5, 224, |_, _, _| 0.1);
        let mask = BinaryMask::from_fn(6, 5, |_, _| true);
        let s = mean_pseudo_absorbance(&cube, &mask, &SpectrumParams::default()).unwrap();
        assert_eq!(s.values.len(), 204);
        assert_eq!(s.n_pixels, 30);
        for v in &s.values {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        let ones = cube_from(3, 3, 224, |_, _, _| 1.0);
        let s = mean_pseudo_absorbance(&ones, &BinaryMask::from_fn(3, 3, |_, _| true), &SpectrumParams::default()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wavelengths_are_retained_channels() {
        let cube = cube_from(2, 2, 224, |_, _, _| 0.5);
        let s = mean_pseudo_absorbance(&cube, &BinaryMask::from_fn(2, 2, |_, _| true), &SpectrumParams::default()).unwrap();
        assert_eq!(s.wavelengths.len(), 204);
        assert!((s.wavelengths[0] - (900.0 + 10.0 * 800.0 / 223.0)).abs() < 1e-9);
        assert!((s.wavelengths[203] - (900.0 + 213.0 * 800.0 / 223.0)).abs() < 1e-9);
        assert!(s.wavelengths.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn mean_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for base in [LogBase::Log10, LogBase::Ln] {
            let (h, w, ch) = (9, 7, 30);
            let vals: Vec<f32> = (0..h * w * ch).map(|_| rng.random_range(0.02f32..1.1)).collect();
            let cube = cube_from(h, w, ch, |r, c, k| vals[(r * w + c) * ch + k]);
            let mask = BinaryMask::from_fn(h, w, |_, _| rng.random_bool(0.6));
            let params = SpectrumParams {
                log_base: base,
                ..Default::default()
            };
            let s = mean_pseudo_absorbance(&cube, &mask, &params).unwrap();
            for (i, k) in (10..ch - 10).enumerate() {
                let mut acc = 0.0;
                let mut n = 0.0;
                for r in 0..h {
                    for c in 0..w {
                        if mask.get(r, c) {
                            let v = vals[(r * w + c) * ch + k] as f64;
                            acc += -match base {
                                LogBase::Log10 => v.log10(),
                                LogBase::Ln => v.ln(),
                            };
                            n += 1.0;
                        }
                    }
                }
                assert!((s.values[i] - acc / n).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dead_pixels_are_counted_and_skipped() {
        let cube = cube_from(1, 3, 24, |_, c, _| if c == 1 { 0.0 } else { 0.1 });
        let s = mean_pseudo_absorbance(&cube, &BinaryMask::from_fn(1, 3, |_, _| true), &SpectrumParams::default()).unwrap();
        assert_eq!((s.n_pixels, s.dead_pixels), (2, 1));
        let all_dead = cube_from(1, 2, 24, |_, _, _| 0.0);
        assert!(matches!(
            mean_pseudo_absorbance(&all_dead, &BinaryMask::from_fn(1, 2, |_, _| true), &SpectrumParams::default()),
            Err(Error::DeadPixel)
        ));
        assert!(matches!(
            mean_pseudo_absorbance(&cube, &BinaryMask::new(1, 3), &SpectrumParams::default()),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn csv_round_trip() {
        let cube = cube_from(2, 2, 30, |_, _, k| 0.2 + 0.01 * k as f32);
        let s = mean_pseudo_absorbance(&cube, &BinaryMask::from_fn(2, 2, |_, _| true), &SpectrumParams::default()).unwrap();
        let text = s.to_csv();
        assert!(text.starts_with("wavelength_nm,absorbance\n"));
        let back = Spectrum::from_csv(&text, LogBase::Log10).unwrap();
        assert_eq!(back.values, s.values);
        assert_eq!(back.wavelengths, s.wavelengths);
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path(), "k", "dish01", 2, (1, 3)).unwrap();
        let meta: SpectrumMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("k.json")).unwrap()).unwrap();
        assert_eq!(meta.n_pixels, 4);
        assert_eq!(meta.log_base, LogBase::Log10);
    }
}
