use super::image::GrayImage;

/// Normalized 1-D Gaussian taps for `sigma`, radius `ceil(3σ)`.
/// Sigmas below 1e-3 give the unit impulse.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if !(sigma >= 1e-3) {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Index into `0..n` with symmetric reflection (`… 1 0 | 0 1 … n-1 | n-1 n-2 …`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian smoothing with reflected borders.
pub fn gaussian_smooth(img: &GrayImage, sigma: f64) -> GrayImage {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return img.clone();
    }
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = (img.height, img.width);
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        let row = &img.data[r * w..(r + 1) * w];
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &t) in kernel.iter().enumerate() {
                acc += t * row[reflect(c as isize + k as isize - radius, w)];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for (k, &t) in kernel.iter().enumerate() {
            let src = reflect(r as isize + k as isize - radius, h);
            let src_row = &tmp[src * w..(src + 1) * w];
            let dst_row = &mut out[r * w..(r + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += t * s;
            }
        }
    }
    GrayImage {
        height: h,
        width: w,
        data: out,
    }
}
