//! Planar points and affine transforms.
//!
//! Image coordinates put pixel centers on integers: column `j`, row `i` is
//! the point `(j, i)`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Arithmetic mean of a non-empty point set.
pub fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len().max(1) as f64;
    let sum = points.iter().fold(Point2::default(), |acc, &p| acc + p);
    sum * (1.0 / n)
}

/// Shoelace area; positive for counter-clockwise order in a y-up frame,
/// which is clockwise on screen.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|k| poly[k].cross(poly[(k + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// A 2×3 planar affine transform `p' = A p + t`, stored row-major as
/// `[[a, b, tx], [c, d, ty]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine2D {
    pub m: [[f64; 3]; 2],
}

impl Default for Affine2D {
    fn default() -> Self {
        Self::identity()
    }
}

impl Affine2D {
    pub const fn new(m: [[f64; 3]; 2]) -> Self {
        Self { m }
    }

    pub const fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self::new([[sx, 0.0, 0.0], [0.0, sy, 0.0]])
    }

    /// Rotation by `angle` radians followed by uniform `scale` and a translation.
    pub fn similarity(angle: f64, scale: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new([[scale * c, -scale * s, tx], [scale * s, scale * c, ty]])
    }

    /// Similarity about a pivot point: the pivot maps to `pivot + shift`.
    pub fn about(pivot: Point2, angle: f64, scale: f64, shift: Point2) -> Self {
        Affine2D::translation(pivot.x + shift.x, pivot.y + shift.y)
            .then_after(&Affine2D::similarity(angle, scale, 0.0, 0.0))
            .then_after(&Affine2D::translation(-pivot.x, -pivot.y))
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.m;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2],
        )
    }

    pub fn apply_all(&self, pts: &[Point2]) -> Vec<Point2> {
        pts.iter().map(|&p| self.apply(p)).collect()
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn then_after(&self, other: &Affine2D) -> Affine2D {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            m[r][0] = a[r][0] * b[0][0] + a[r][1] * b[1][0];
            m[r][1] = a[r][0] * b[0][1] + a[r][1] * b[1][1];
            m[r][2] = a[r][0] * b[0][2] + a[r][1] * b[1][2] + a[r][2];
        }
        Affine2D::new(m)
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|v| v.is_finite())
    }

    pub fn inverse(&self) -> Result<Affine2D> {
        let det = self.det();
        if det.abs() <= 1e-9 || !self.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "affine transform is not invertible (det = {det:e})"
            )));
        }
        let [[a, b, tx], [c, d, ty]] = self.m;
        let ia = d / det;
        let ib = -b / det;
        let ic = -c / det;
        let id = a / det;
        Ok(Affine2D::new([
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, id, -(ic * tx + id * ty)],
        ]))
    }

    /// Largest absolute entry difference.
    pub fn max_abs_diff(&self, other: &Affine2D) -> f64 {
        self.m
            .iter()
            .flatten()
            .zip(other.m.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Applies `t` to every point; free-function form used by the tracking stage.
pub fn apply_affine(t: &Affine2D, pts: &[Point2]) -> Vec<Point2> {
    t.apply_all(pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_translation() {
        let p = Point2::new(3.5, -2.0);
        assert_eq!(Affine2D::identity().apply(p), p);
        assert_eq!(Affine2D::translation(1.0, 2.0).apply(p), Point2::new(4.5, 0.0));
    }

    #[test]
    fn composition_matches_sequential_application() {
        let a = Affine2D::new([[1.1, 0.2, 3.0], [-0.3, 0.9, -4.0]]);
        let b = Affine2D::similarity(0.3, 1.2, 5.0, 7.0);
        let pts = [Point2::new(0.0, 0.0), Point2::new(10.0, -3.0), Point2::new(-7.5, 2.25)];
        let composed = b.then_after(&a);
        for p in pts {
            let seq = b.apply(a.apply(p));
            let one = composed.apply(p);
            assert!(seq.dist(one) < 1e-9);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let a = Affine2D::new([[1.1, 0.2, 3.0], [-0.3, 0.9, -4.0]]);
        let inv = a.inverse().unwrap();
        assert!(inv.then_after(&a).max_abs_diff(&Affine2D::identity()) < 1e-12);
        assert!(Affine2D::scaling(0.0, 1.0).inverse().is_err());
    }

    #[test]
    fn point_serializes_as_pair() {
        let s = serde_json::to_string(&Point2::new(1.5, 2.0)).unwrap();
        assert_eq!(s, "[1.5,2.0]");
    }
}
