//! Affine estimation from point correspondences.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, Affine2D, Point2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub inlier_tol: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_tol: 2.0,
            iterations: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineFit {
    pub transform: Affine2D,
    /// Indices of correspondences within tolerance, ascending.
    pub inliers: Vec<usize>,
    /// RMS residual over the inliers.
    pub rms: f64,
}

/// Exact affine through three correspondences; `None` for collinear sources.
pub fn fit_affine_exact(src: [Point2; 3], dst: [Point2; 3]) -> Option<Affine2D> {
    let e1 = src[1] - src[0];
    let e2 = src[2] - src[0];
    let det = e1.cross(e2);
    let scale = e1.norm().max(e2.norm()).max(1.0);
    if det.abs() <= 1e-9 * scale * scale {
        return None;
    }
    let f1 = dst[1] - dst[0];
    let f2 = dst[2] - dst[0];
    // Linear part L with L·[e1 e2] = [f1 f2].
    let inv = [[e2.y / det, -e2.x / det], [-e1.y / det, e1.x / det]];
    let a = f1.x * inv[0][0] + f2.x * inv[1][0];
    let b = f1.x * inv[0][1] + f2.x * inv[1][1];
    let c = f1.y * inv[0][0] + f2.y * inv[1][0];
    let d = f1.y * inv[0][1] + f2.y * inv[1][1];
    let tx = dst[0].x - a * src[0].x - b * src[0].y;
    let ty = dst[0].y - c * src[0].x - d * src[0].y;
    Some(Affine2D::new([[a, b, tx], [c, d, ty]]))
}

/// Least-squares affine over all pairs (centered normal equations).
pub fn fit_affine_lstsq(src: &[Point2], dst: &[Point2]) -> Result<Affine2D> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::EstimationFailed(format!(
            "need at least 3 paired points, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut dxx, mut dxy, mut dyx, mut dyy) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (s, d) = (*s - cs, *d - cd);
        sxx += s.x * s.x;
        sxy += s.x * s.y;
        syy += s.y * s.y;
        dxx += d.x * s.x;
        dxy += d.x * s.y;
        dyx += d.y * s.x;
        dyy += d.y * s.y;
    }
    let det = sxx * syy - sxy * sxy;
    let spread = (sxx + syy).max(1e-300);
    if det.abs() <= 1e-12 * spread * spread {
        return Err(Error::EstimationFailed("source points are collinear".into()));
    }
    let (i00, i01, i11) = (syy / det, -sxy / det, sxx / det);
    let a = dxx * i00 + dxy * i01;
    let b = dxx * i01 + dxy * i11;
    let c = dyx * i00 + dyy * i01;
    let d = dyx * i01 + dyy * i11;
    Ok(Affine2D::new([
        [a, b, cd.x - a * cs.x - b * cs.y],
        [c, d, cd.y - c * cs.x - d * cs.y],
    ]))
}

fn residuals(t: &Affine2D, src: &[Point2], dst: &[Point2]) -> Vec<f64> {
    src.iter().zip(dst).map(|(s, d)| t.apply(*s).dist(*d)).collect()
}

fn inliers_of(res: &[f64], tol: f64) -> Vec<usize> {
    (0..res.len()).filter(|&k| res[k] <= tol).collect()
}

/// RANSAC over minimal 3-point samples followed by least-squares refits on
/// the consensus set until it stops changing.
///
/// When the number of distinct triples does not exceed `iterations`, every
/// triple is tried in lexicographic order instead of sampling, so small
/// problems (marker corners, board centers) are solved exhaustively. With a
/// fixed seed the result is bit-reproducible.
pub fn estimate_affine_ransac(src: &[Point2], dst: &[Point2], params: &RansacParams) -> Result<AffineFit> {
    let n = src.len();
    if n != dst.len() {
        return Err(Error::EstimationFailed(format!(
            "{} source points but {} destination points",
            n,
            dst.len()
        )));
    }
    if n < 3 {
        return Err(Error::EstimationFailed(format!("need at least 3 correspondences, got {n}")));
    }
    let mut best: Option<(usize, f64, Affine2D)> = None;
    let mut consider = |idx: [usize; 3]| {
        let Some(t) = fit_affine_exact(idx.map(|k| src[k]), idx.map(|k| dst[k])) else {
            return;
        };
        let res = residuals(&t, src, dst);
        let count = res.iter().filter(|&&r| r <= params.inlier_tol).count();
        let cost: f64 = res.iter().map(|r| r.min(params.inlier_tol).powi(2)).sum();
        let better = match &best {
            None => true,
            Some((bc, bcost, _)) => count > *bc || (count == *bc && cost < *bcost),
        };
        if better {
            best = Some((count, cost, t));
        }
    };
    let triples = n * (n - 1) * (n - 2) / 6;
    if triples <= params.iterations {
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    consider([i, j, k]);
                }
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for _ in 0..params.iterations {
            let v = sample(&mut rng, n, 3);
            consider([v.index(0), v.index(1), v.index(2)]);
        }
    }
    let Some((count, _, model)) = best else {
        return Err(Error::EstimationFailed("all samples were degenerate".into()));
    };
    if count < 3 {
        return Err(Error::EstimationFailed(format!("best model has only {count} inliers")));
    }
    let mut inliers = inliers_of(&residuals(&model, src, dst), params.inlier_tol);
    let mut transform = model;
    for _ in 0..10 {
        let s: Vec<Point2> = inliers.iter().map(|&k| src[k]).collect();
        let d: Vec<Point2> = inliers.iter().map(|&k| dst[k]).collect();
        transform = fit_affine_lstsq(&s, &d)?;
        let next = inliers_of(&residuals(&transform, src, dst), params.inlier_tol);
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
    }
    let res = residuals(&transform, src, dst);
    let rms = (inliers.iter().map(|&k| res[k] * res[k]).sum::<f64>() / inliers.len() as f64).sqrt();
    Ok(AffineFit {
        transform,
        inliers,
        rms,
    })
}
