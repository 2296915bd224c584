//! Line clustering and intersection.

use std::f64::consts::PI;

use super::hough::HoughLine;
use crate::geometry::Point2;

/// Intersection of two lines, with the indices of the lines that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub point: Point2,
    pub lines: (usize, usize),
}

impl Intersection {
    pub fn lies_on(&self, line: usize) -> bool {
        self.lines.0 == line || self.lines.1 == line
    }

    /// The other line through this point, if `line` is one of its two.
    pub fn other_line(&self, line: usize) -> Option<usize> {
        if self.lines.0 == line {
            Some(self.lines.1)
        } else if self.lines.1 == line {
            Some(self.lines.0)
        } else {
            None
        }
    }
}

/// `b` expressed in the angular frame of `a`: θ within π/2 of `a.theta`,
/// possibly outside `[0, π)`.
fn aligned(a: &HoughLine, b: &HoughLine) -> (f64, f64) {
    let d = b.theta - a.theta;
    if d > PI / 2.0 {
        (-b.rho, b.theta - PI)
    } else if d < -PI / 2.0 {
        (-b.rho, b.theta + PI)
    } else {
        (b.rho, b.theta)
    }
}

fn similar(a: &HoughLine, b: &HoughLine, rho_tol: f64, theta_tol: f64) -> bool {
    let (rho, theta) = aligned(a, b);
    (rho - a.rho).abs() <= rho_tol && (theta - a.theta).abs() <= theta_tol
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering on (ρ, θ) proximity with θ compared modulo π;
/// each cluster becomes its member mean. Output follows the order of each
/// cluster's first member.
pub fn average_similar_lines(lines: &[HoughLine], rho_tol: f64, theta_tol: f64) -> Vec<HoughLine> {
    let n = lines.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&lines[i], &lines[j], rho_tol, theta_tol) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        match clusters.iter_mut().find(|(r, _)| *r == root) {
            Some((_, members)) => members.push(i),
            None => clusters.push((root, vec![i])),
        }
    }
    clusters
        .into_iter()
        .map(|(_, members)| {
            let anchor = &lines[members[0]];
            let (mut rho, mut theta, mut votes) = (0.0, 0.0, 0u32);
            for &m in &members {
                let (r, t) = aligned(anchor, &lines[m]);
                rho += r;
                theta += t;
                votes = votes.saturating_add(lines[m].votes);
            }
            let k = members.len() as f64;
            let mut line = HoughLine::new(rho / k, theta / k);
            line.votes = votes;
            line
        })
        .collect()
}

/// Intersection point of two lines; `None` when nearly parallel
/// (`|sin Δθ| < 1e-6`).
pub fn line_intersection(a: &HoughLine, b: &HoughLine) -> Option<Point2> {
    let (c1, s1) = (a.theta.cos(), a.theta.sin());
    let (c2, s2) = (b.theta.cos(), b.theta.sin());
    let det = c1 * s2 - s1 * c2;
    if det.abs() < 1e-6 {
        return None;
    }
    Some(Point2::new(
        (a.rho * s2 - b.rho * s1) / det,
        (c1 * b.rho - c2 * a.rho) / det,
    ))
}

/// All pairwise intersections lying in `[0, width) × [0, height)`.
pub fn line_intersections(lines: &[HoughLine], width: usize, height: usize) -> Vec<Intersection> {
    let mut out = Vec::new();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if let Some(p) = line_intersection(&lines[i], &lines[j]) {
                if p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64 {
                    out.push(Intersection {
                        point: p,
                        lines: (i, j),
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_close_lines_average() {
        let out = average_similar_lines(&[HoughLine::new(100.0, 0.0), HoughLine::new(104.0, 0.0)], 10.0, 2f64.to_radians());
        assert_eq!(out.len(), 1);
        assert!((out[0].rho - 102.0).abs() < 1e-12);
        assert!(out[0].theta.abs() < 1e-12);
    }

    #[test]
    fn disjoint_clusters_stay_apart() {
        let lines = [
            HoughLine::new(10.0, 0.3),
            HoughLine::new(60.0, 0.3),
            HoughLine::new(12.0, 0.3),
            HoughLine::new(10.0, 1.8),
        ];
        let out = average_similar_lines(&lines, 10.0, 2f64.to_radians());
        assert_eq!(out.len(), 3);
        assert!((out[0].rho - 11.0).abs() < 1e-12);
    }

    #[test]
    fn clustering_across_theta_seam() {
        // (50, π − 0.005) is the same line as (−50, −0.005).
        let lines = [HoughLine::new(-50.0, 0.005), HoughLine::new(50.0, PI - 0.005)];
        let out = average_similar_lines(&lines, 3.0, 0.02);
        assert_eq!(out.len(), 1);
        assert!(out[0].theta.abs() < 1e-9 || (out[0].theta - PI).abs() < 1e-9);
        assert!((out[0].rho.abs() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn axis_aligned_corner() {
        let lines = [HoughLine::new(30.0, 0.0), HoughLine::new(20.0, PI / 2.0)];
        let pts = line_intersections(&lines, 100, 100);
        assert_eq!(pts.len(), 1);
        assert!(pts[0].point.dist(Point2::new(30.0, 20.0)) < 1e-9);
        assert_eq!(pts[0].lines, (0, 1));
    }

    #[test]
    fn parallel_pair_has_no_intersection() {
        let lines = [HoughLine::new(30.0, 0.4), HoughLine::new(50.0, 0.4)];
        assert!(line_intersections(&lines, 100, 100).is_empty());
    }

    #[test]
    fn out_of_bounds_dropped() {
        let lines = [HoughLine::new(130.0, 0.0), HoughLine::new(20.0, PI / 2.0)];
        assert!(line_intersections(&lines, 100, 100).is_empty());
    }

    #[test]
    fn six_by_six_grid_matches_analytic_solve() {
        let rot = 4f64.to_radians();
        let mut lines = Vec::new();
        for k in 0..6 {
            lines.push(HoughLine::new(40.0 + 25.0 * k as f64, rot));
        }
        for k in 0..6 {
            lines.push(HoughLine::new(35.0 + 25.0 * k as f64, rot + PI / 2.0));
        }
        let pts = line_intersections(&lines, 250, 250);
        assert_eq!(pts.len(), 36);
        for p in &pts {
            let (a, b) = (&lines[p.lines.0], &lines[p.lines.1]);
            // Analytic solve in the rotated frame: u = ρ_a, v = ρ_b.
            let expected = Point2::new(a.rho, b.rho).rotate(rot);
            assert!(p.point.dist(expected) < 1e-6);
            assert!(a.distance(p.point).abs() < 1e-9 && b.distance(p.point).abs() < 1e-9);
        }
    }
}
