//! Hough transforms for straight lines and circles.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::edges::Gradient;
use super::image::BinaryMask;
use crate::geometry::Point2;
use crate::{Error, Result};

/// Line `x·cos θ + y·sin θ = ρ` with `θ ∈ [0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    #[serde(default)]
    pub votes: u32,
}

impl HoughLine {
    pub fn new(rho: f64, theta: f64) -> Self {
        Self {
            rho,
            theta,
            votes: 0,
        }
        .normalized()
    }

    /// Brings θ into `[0, π)`, flipping the sign of ρ when θ wraps.
    pub fn normalized(mut self) -> Self {
        let mut t = self.theta.rem_euclid(2.0 * PI);
        if t >= PI {
            t -= PI;
            self.rho = -self.rho;
        }
        // rem_euclid can round up to exactly π for tiny negative inputs.
        if t >= PI {
            t = 0.0;
            self.rho = -self.rho;
        }
        self.theta = t;
        self
    }

    pub fn normal(&self) -> Point2 {
        Point2::new(self.theta.cos(), self.theta.sin())
    }

    /// Signed distance from the line.
    pub fn distance(&self, p: Point2) -> f64 {
        self.normal().dot(p) - self.rho
    }

    /// Line through two points.
    pub fn through(a: Point2, b: Point2) -> Self {
        let d = b - a;
        let theta = d.y.atan2(d.x) + PI / 2.0;
        let n = Point2::new(theta.cos(), theta.sin());
        HoughLine::new(n.dot(a), theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
    #[serde(default)]
    pub votes: u32,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Self {
        Self {
            center,
            radius,
            votes: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughLineParams {
    /// Angular resolution: number of θ bins over `[0, π)`.
    pub theta_bins: usize,
    pub rho_step: f64,
    pub min_votes: u32,
    /// Peaks closer than this many ρ bins *and* θ bins to a stronger peak are dropped.
    pub suppress_rho: usize,
    pub suppress_theta: usize,
}

impl Default for HoughLineParams {
    fn default() -> Self {
        Self {
            theta_bins: 360,
            rho_step: 1.0,
            min_votes: 60,
            suppress_rho: 3,
            suppress_theta: 3,
        }
    }
}

/// Standard (ρ, θ) accumulator over edge pixels; returns peaks with at least
/// `min_votes`, strongest first.
pub fn hough_lines(edges: &BinaryMask, params: &HoughLineParams) -> Vec<HoughLine> {
    let (h, w) = (edges.height, edges.width);
    let n_theta = params.theta_bins.max(1);
    let rho_max = ((h * h + w * w) as f64).sqrt().ceil();
    let n_rho = (2.0 * rho_max / params.rho_step).ceil() as usize + 1;
    let trig: Vec<(f64, f64)> = (0..n_theta)
        .map(|t| {
            let th = t as f64 * PI / n_theta as f64;
            (th.cos(), th.sin())
        })
        .collect();
    let mut acc = vec![0u32; n_rho * n_theta];
    let mut any = false;
    for r in 0..h {
        for c in 0..w {
            if !edges.get(r, c) {
                continue;
            }
            any = true;
            for (t, &(cs, sn)) in trig.iter().enumerate() {
                let rho = c as f64 * cs + r as f64 * sn;
                let ri = ((rho + rho_max) / params.rho_step).round() as usize;
                acc[ri * n_theta + t] += 1;
            }
        }
    }
    if !any {
        return Vec::new();
    }

    // Neighbor lookup across the θ seam: (ρ, θ+π) ≡ (−ρ, θ).
    let at = |ri: isize, ti: isize| -> Option<(u32, usize)> {
        let (mut ri, mut ti) = (ri, ti);
        if ti < 0 {
            ti += n_theta as isize;
            ri = n_rho as isize - 1 - ri;
        } else if ti >= n_theta as isize {
            ti -= n_theta as isize;
            ri = n_rho as isize - 1 - ri;
        }
        if ri < 0 || ri >= n_rho as isize {
            None
        } else {
            let k = ri as usize * n_theta + ti as usize;
            Some((acc[k], k))
        }
    };
    let mut peaks: Vec<(u32, usize, usize)> = Vec::new();
    for ri in 0..n_rho {
        for ti in 0..n_theta {
            let k = ri * n_theta + ti;
            let v = acc[k];
            if v < params.min_votes {
                continue;
            }
            let mut is_max = true;
            'scan: for dr in -1isize..=1 {
                for dt in -1isize..=1 {
                    if (dr, dt) == (0, 0) {
                        continue;
                    }
                    // Plateaus: the lowest accumulator index wins.
                    if let Some((n, nk)) = at(ri as isize + dr, ti as isize + dt) {
                        if n > v || (n == v && nk < k) {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if is_max {
                peaks.push((v, ri, ti));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut kept: Vec<(usize, usize)> = Vec::new();
    let mut lines = Vec::new();
    for (votes, ri, ti) in peaks {
        let close = kept.iter().any(|&(kr, kt)| {
            let dt = ti.abs_diff(kt);
            let direct = dt <= params.suppress_theta && ri.abs_diff(kr) <= params.suppress_rho;
            let wrapped = n_theta - dt <= params.suppress_theta
                && ri.abs_diff(n_rho - 1 - kr) <= params.suppress_rho;
            direct || wrapped
        });
        if close {
            continue;
        }
        kept.push((ri, ti));
        lines.push(HoughLine {
            rho: ri as f64 * params.rho_step - rho_max,
            theta: ti as f64 * PI / n_theta as f64,
            votes,
        });
    }
    lines
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughCircleParams {
    pub r_min: f64,
    pub r_max: f64,
    /// Minimum accumulator support for a reported circle.
    pub min_votes: u32,
    /// Centers closer than this to a stronger candidate are suppressed.
    pub min_center_dist: f64,
    pub max_circles: usize,
}

impl Default for HoughCircleParams {
    fn default() -> Self {
        Self {
            r_min: 10.0,
            r_max: 100.0,
            min_votes: 20,
            min_center_dist: 10.0,
            max_circles: 10,
        }
    }
}

fn radius_range(params: &HoughCircleParams) -> (usize, usize) {
    let lo = params.r_min.max(1.0).floor() as usize;
    let hi = params.r_max.ceil().max(lo as f64) as usize;
    (lo, hi)
}

/// Full three-parameter voting: every edge pixel votes for every center on
/// a circle of each radius around it. Suitable for modest images.
pub fn hough_circles(edges: &BinaryMask, params: &HoughCircleParams) -> Vec<Circle> {
    let (h, w) = (edges.height, edges.width);
    let (r_lo, r_hi) = radius_range(params);
    let n_r = r_hi - r_lo + 1;
    let pts: Vec<(f64, f64)> = (0..h * w)
        .filter(|&k| edges.bits[k])
        .map(|k| ((k % w) as f64, (k / w) as f64))
        .collect();
    if pts.is_empty() {
        return Vec::new();
    }
    let mut acc = vec![0u32; n_r * h * w];
    let mut mark = vec![u32::MAX; h * w];
    for (ir, r) in (r_lo..=r_hi).enumerate() {
        let r = r as f64;
        let steps = (2.0 * PI * r).ceil().max(8.0) as usize;
        let dirs: Vec<(f64, f64)> = (0..steps)
            .map(|s| {
                let a = s as f64 * 2.0 * PI / steps as f64;
                (r * a.cos(), r * a.sin())
            })
            .collect();
        let layer = &mut acc[ir * h * w..(ir + 1) * h * w];
        for (pi, &(x, y)) in pts.iter().enumerate() {
            let tag = (pi * n_r + ir) as u32;
            for &(dx, dy) in &dirs {
                let cx = (x + dx).round();
                let cy = (y + dy).round();
                if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                    continue;
                }
                let k = cy as usize * w + cx as usize;
                // One vote per (edge pixel, radius, center).
                if mark[k] != tag {
                    mark[k] = tag;
                    layer[k] += 1;
                }
            }
        }
    }
    let mut cands: Vec<Circle> = Vec::new();
    for ir in 0..n_r {
        for k in 0..h * w {
            let v = acc[ir * h * w + k];
            if v >= params.min_votes {
                cands.push(Circle {
                    center: Point2::new((k % w) as f64, (k / w) as f64),
                    radius: (r_lo + ir) as f64,
                    votes: v,
                });
            }
        }
    }
    suppress_circles(cands, params)
}

fn suppress_circles(mut cands: Vec<Circle>, params: &HoughCircleParams) -> Vec<Circle> {
    cands.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.center.y.total_cmp(&b.center.y))
            .then(a.center.x.total_cmp(&b.center.x))
            .then(a.radius.total_cmp(&b.radius))
    });
    let mut out: Vec<Circle> = Vec::new();
    for c in cands {
        if out.len() >= params.max_circles {
            break;
        }
        if out
            .iter()
            .all(|o| o.center.dist(c.center) >= params.min_center_dist)
        {
            out.push(c);
        }
    }
    out
}

/// Gradient-directed voting: each edge pixel votes for centers along its
/// gradient line (both senses) at every admissible radius, then each center
/// peak takes the radius with the most supporting edge pixels.
pub fn hough_circles_gradient(
    edges: &BinaryMask,
    grad: &Gradient,
    params: &HoughCircleParams,
) -> Vec<Circle> {
    let (h, w) = (edges.height, edges.width);
    let (r_lo, r_hi) = radius_range(params);
    let mut acc = vec![0u32; h * w];
    let mut pts = Vec::new();
    for k in 0..h * w {
        if !edges.bits[k] {
            continue;
        }
        let mag = grad.magnitude(k);
        if mag <= 0.0 {
            continue;
        }
        let (x, y) = ((k % w) as f64, (k / w) as f64);
        pts.push((x, y));
        let (ux, uy) = (grad.gx[k] / mag, grad.gy[k] / mag);
        for sign in [-1.0, 1.0] {
            for r in r_lo..=r_hi {
                let cx = (x + sign * ux * r as f64).round();
                let cy = (y + sign * uy * r as f64).round();
                if cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
                    continue;
                }
                acc[cy as usize * w + cx as usize] += 1;
            }
        }
    }
    if pts.is_empty() {
        return Vec::new();
    }
    // 3×3 box sum absorbs rounding scatter of the votes.
    let mut smooth = vec![0u32; h * w];
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let mut s = 0;
            for dr in 0..3 {
                for dc in 0..3 {
                    s += acc[(r + dr - 1) * w + c + dc - 1];
                }
            }
            smooth[r * w + c] = s;
        }
    }
    let mut peaks: Vec<(u32, usize)> = Vec::new();
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let k = r * w + c;
            let v = smooth[k];
            if v < params.min_votes {
                continue;
            }
            let is_max = (-1isize..=1).all(|dr| {
                (-1isize..=1).all(|dc| {
                    let n = ((r as isize + dr) as usize) * w + (c as isize + dc) as usize;
                    n == k || smooth[n] < v || (smooth[n] == v && n > k)
                })
            });
            if is_max {
                peaks.push((v, k));
            }
        }
    }
    peaks.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut out: Vec<Circle> = Vec::new();
    for (votes, k) in peaks {
        if out.len() >= params.max_circles {
            break;
        }
        let center0 = Point2::new((k % w) as f64, (k / w) as f64);
        if out.iter().any(|o| o.center.dist(center0) < params.min_center_dist) {
            continue;
        }
        // Sub-pixel center: vote-weighted mean over the 3×3 window.
        let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let n = ((center0.y as isize + dr) as usize) * w + (center0.x as isize + dc) as usize;
                let v = acc[n] as f64;
                sx += v * (center0.x + dc as f64);
                sy += v * (center0.y + dr as f64);
                sw += v;
            }
        }
        let center = if sw > 0.0 {
            Point2::new(sx / sw, sy / sw)
        } else {
            center0
        };
        let mut hist = vec![0u32; r_hi + 2];
        for &(x, y) in &pts {
            let d = (x - center.x).hypot(y - center.y);
            let bin = d.round() as usize;
            if bin >= r_lo && bin <= r_hi {
                hist[bin] += 1;
            }
        }
        // Radius support is normalized by circumference so small radii
        // do not win merely by being crossed by unrelated edges less often.
        let best = (r_lo..=r_hi)
            .max_by(|&a, &b| {
                let sa = (hist[a - 1] + hist[a] + hist[a + 1]) as f64 / a as f64;
                let sb = (hist[b - 1] + hist[b] + hist[b + 1]) as f64 / b as f64;
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .unwrap_or(r_lo);
        let (mut num, mut den) = (0.0, 0.0);
        for bin in best.saturating_sub(2)..=(best + 2).min(r_hi + 1) {
            num += bin as f64 * hist[bin] as f64;
            den += hist[bin] as f64;
        }
        let radius = if den > 0.0 { num / den } else { best as f64 };
        out.push(Circle {
            center,
            radius,
            votes,
        });
    }
    out
}

/// Keeps circles whose radius lies in `band` and returns the one whose center
/// is nearest to `image_center`.
pub fn select_dish_circle(circles: &[Circle], band: (f64, f64), image_center: Point2) -> Result<Circle> {
    circles
        .iter()
        .filter(|c| c.radius >= band.0 && c.radius <= band.1)
        .min_by(|a, b| {
            a.center
                .dist(image_center)
                .total_cmp(&b.center.dist(image_center))
        })
        .copied()
        .ok_or(Error::NoDishFound {
            r_min: band.0,
            r_max: band.1,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vision::{edge_detect_with_gradient, gaussian_smooth, EdgeParams, GrayImage};

    fn outline(h: usize, w: usize, circles: &[(f64, f64, f64)]) -> BinaryMask {
        let mut m = BinaryMask::new(h, w);
        for &(cx, cy, r) in circles {
            let steps = (2.0 * PI * r * 4.0) as usize;
            for s in 0..steps {
                let a = s as f64 * 2.0 * PI / steps as f64;
                let x = (cx + r * a.cos()).round();
                let y = (cy + r * a.sin()).round();
                if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                    m.set(y as usize, x as usize, true);
                }
            }
        }
        m
    }

    fn raster_line(h: usize, w: usize, rho: f64, theta: f64) -> BinaryMask {
        let l = HoughLine::new(rho, theta);
        BinaryMask::from_fn(h, w, |r, c| l.distance(Point2::new(c as f64, r as f64)).abs() <= 0.5)
    }

    #[test]
    fn normalization_wraps_theta() {
        let l = HoughLine::new(5.0, PI + 0.1);
        assert!((l.theta - 0.1).abs() < 1e-12);
        assert_eq!(l.rho, -5.0);
        let l = HoughLine::new(5.0, -0.1);
        assert!((l.theta - (PI - 0.1)).abs() < 1e-12);
        assert_eq!(l.rho, -5.0);
        let t = HoughLine::through(Point2::new(0.0, 3.0), Point2::new(10.0, 3.0));
        assert!(t.distance(Point2::new(4.0, 3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_circle_full_voting() {
        let edges = outline(160, 200, &[(100.0, 80.0, 50.0)]);
        let params = HoughCircleParams {
            r_min: 40.0,
            r_max: 60.0,
            min_votes: 50,
            ..Default::default()
        };
        let found = hough_circles(&edges, &params);
        let top = found[0];
        assert!(top.center.dist(Point2::new(100.0, 80.0)) <= 2.0);
        assert!((top.radius - 50.0).abs() <= 2.0);
    }

    #[test]
    fn two_circles_full_voting() {
        let edges = outline(120, 200, &[(50.0, 60.0, 30.0), (140.0, 55.0, 25.0)]);
        let params = HoughCircleParams {
            r_min: 20.0,
            r_max: 35.0,
            min_votes: 40,
            min_center_dist: 15.0,
            max_circles: 4,
        };
        let found = hough_circles(&edges, &params);
        for (x, y, r) in [(50.0, 60.0, 30.0), (140.0, 55.0, 25.0)] {
            assert!(
                found
                    .iter()
                    .take(2)
                    .any(|c| c.center.dist(Point2::new(x, y)) <= 2.0 && (c.radius - r).abs() <= 2.0),
                "{found:?}"
            );
        }
    }

    #[test]
    fn no_edges_no_circles() {
        let edges = BinaryMask::new(50, 50);
        assert!(hough_circles(&edges, &HoughCircleParams::default()).is_empty());
        let g = crate::vision::Gradient::of(&GrayImage::new(50, 50));
        assert!(hough_circles_gradient(&edges, &g, &HoughCircleParams::default()).is_empty());
    }

    #[test]
    fn gradient_voting_on_filled_disk() {
        let (cx, cy, rad) = (130.3, 101.7, 74.0);
        let img = GrayImage::from_fn(200, 260, |r, c| {
            if (c as f64 - cx).hypot(r as f64 - cy) <= rad {
                0.9
            } else {
                0.2
            }
        });
        let (edges, grad) = edge_detect_with_gradient(&gaussian_smooth(&img, 1.5), &EdgeParams::default());
        let params = HoughCircleParams {
            r_min: 50.0,
            r_max: 96.0,
            min_votes: 50,
            ..Default::default()
        };
        let c = hough_circles_gradient(&edges, &grad, &params)[0];
        assert!(c.center.dist(Point2::new(cx, cy)) <= 1.0, "{c:?}");
        assert!((c.radius - rad).abs() <= 1.5, "{c:?}");
    }

    #[test]
    fn dish_selection() {
        let a = Circle::new(Point2::new(100.0, 100.0), 60.0);
        let b = Circle::new(Point2::new(40.0, 30.0), 62.0);
        let tiny = Circle::new(Point2::new(100.0, 100.0), 5.0);
        let center = Point2::new(101.0, 99.0);
        assert_eq!(select_dish_circle(&[a], (50.0, 70.0), center).unwrap(), a);
        assert_eq!(select_dish_circle(&[b, a, tiny], (50.0, 70.0), center).unwrap(), a);
        assert!(matches!(
            select_dish_circle(&[tiny], (50.0, 70.0), center),
            Err(Error::NoDishFound { .. })
        ));
    }

    #[test]
    fn single_raster_line() {
        for &(rho, theta_deg) in &[(60.0, 30.0), (-20.0, 120.0), (75.0, 0.0), (50.0, 90.0), (-40.0, 173.5)] {
            let theta = f64::to_radians(theta_deg);
            let edges = raster_line(120, 160, rho, theta);
            let params = HoughLineParams {
                min_votes: 40,
                ..Default::default()
            };
            let lines = hough_lines(&edges, &params);
            assert!(!lines.is_empty(), "no line for ({rho}, {theta_deg}°)");
            let l = lines[0];
            let truth = HoughLine::new(rho, theta);
            let (dr, dt) = line_delta(&l, &truth);
            assert!(dr <= 2.0 && dt <= 1f64.to_radians(), "{l:?} vs {truth:?}");
            // Error stays within one accumulator bin.
            assert!(dr <= params.rho_step + 0.5 && dt <= PI / params.theta_bins as f64 + 1e-9);
        }
    }

    fn line_delta(a: &HoughLine, b: &HoughLine) -> (f64, f64) {
        let dt = (a.theta - b.theta).abs();
        if dt > PI / 2.0 {
            ((a.rho + b.rho).abs(), PI - dt)
        } else {
            ((a.rho - b.rho).abs(), dt)
        }
    }

    #[test]
    fn empty_edges_no_lines() {
        assert!(hough_lines(&BinaryMask::new(30, 30), &HoughLineParams::default()).is_empty());
    }

    #[test]
    fn grid_of_lines() {
        let (h, w) = (220, 220);
        let mut edges = BinaryMask::new(h, w);
        let rot = 3f64.to_radians();
        let mut truth = Vec::new();
        for k in 0..6 {
            let off = 30.0 + 30.0 * k as f64;
            truth.push(HoughLine::new(off, rot));
            truth.push(HoughLine::new(off, rot + PI / 2.0));
        }
        for l in &truth {
            let m = raster_line(h, w, l.rho, l.theta);
            for k in 0..h * w {
                edges.bits[k] |= m.bits[k];
            }
        }
        let lines = hough_lines(&edges, &HoughLineParams { min_votes: 100, ..Default::default() });
        assert!(lines.len() >= 12);
        for t in &truth {
            assert!(lines.iter().any(|l| {
                let (dr, dt) = line_delta(l, t);
                dr <= 2.0 && dt <= 1f64.to_radians()
            }));
        }
    }
}
