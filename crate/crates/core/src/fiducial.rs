//! Square binary marker detection and the marker corner file.

use std::fs;
use std::path::Path;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, signed_area, Point2};
use crate::pixcodec::ImageCube;
use crate::vision::{connected_components, grayscale, Connectivity, GrayImage, BinaryMask, Region};
use crate::{Error, Result};

/// 16 codes of 4×4 bits, row-major with the first bit in the MSB, 1 = white.
/// Every pair differs in at least 8 bits and every code is at least 4 bits
/// away from each quarter-turn of itself and of every other code.
pub const DICTIONARY: [u16; 16] = [
    0x62e4, 0xbd1c, 0x420b, 0x1bb0, 0x307a, 0x94c3, 0x6537, 0xfb63, 0x8356, 0x29cf, 0xcc6e, 0x176d,
    0xe8b9, 0xa7aa, 0xcf85, 0x5855,
];

/// Rotates a 4×4 code a quarter turn clockwise.
pub fn rotate_code(code: u16) -> u16 {
    let bit = |r: usize, c: usize| (code >> (15 - (r * 4 + c))) & 1;
    let mut out = 0;
    for r in 0..4 {
        for c in 0..4 {
            out |= bit(3 - c, r) << (15 - (r * 4 + c));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerDetection {
    pub id: u16,
    /// Clockwise from the code's top-left corner.
    pub corners: [Point2; 4],
}

impl MarkerDetection {
    pub fn center(&self) -> Point2 {
        marker_center(self)
    }
}

pub fn marker_center(m: &MarkerDetection) -> Point2 {
    centroid(&m.corners)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarkerParams {
    /// Reflectance below which a pixel counts as printed black.
    pub dark_threshold: f64,
    /// Accepted side length of the black square, in pixels.
    pub min_side: f64,
    pub max_side: f64,
    pub max_aspect: f64,
    /// Markers expected on one dish image.
    pub expected: usize,
}

impl Default for MarkerParams {
    fn default() -> Self {
        Self {
            dark_threshold: 0.2,
            min_side: 12.0,
            max_side: 80.0,
            max_aspect: 1.6,
            expected: 2,
        }
    }
}

/// 3×3 homography mapping `src[k]` to `dst[k]` (h33 = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [[f64; 3]; 3]);

impl Homography {
    pub fn from_points(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Self> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for k in 0..4 {
            let (x, y) = (src[k].x, src[k].y);
            let (u, v) = (dst[k].x, dst[k].y);
            let r = 2 * k;
            a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
            a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::InvalidGeometry("degenerate quad for homography".into()))?;
        Ok(Self([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]))
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.0;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }
}

fn convex_hull(mut pts: Vec<Point2>) -> Vec<Point2> {
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && (lower[lower.len() - 1] - lower[lower.len() - 2]).cross(p - lower[lower.len() - 2]) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && (upper[upper.len() - 1] - upper[upper.len() - 2]).cross(p - upper[upper.len() - 2]) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Four hull vertices approximating a square blob: a far corner, its
/// opposite, and the extreme points on each side of that diagonal.
fn hull_quad(hull: &[Point2]) -> Option<[Point2; 4]> {
    if hull.len() < 4 {
        return None;
    }
    let c = centroid(hull);
    let far = |from: Point2| {
        *hull
            .iter()
            .max_by(|a, b| a.dist(from).total_cmp(&b.dist(from)))
            .expect("non-empty hull")
    };
    let p0 = far(c);
    let p2 = far(p0);
    let d = p2 - p0;
    let side = |p: &Point2| d.cross(*p - p0);
    let p1 = *hull.iter().max_by(|a, b| side(a).total_cmp(&side(b)))?;
    let p3 = *hull.iter().min_by(|a, b| side(a).total_cmp(&side(b)))?;
    if side(&p1) <= 0.0 || side(&p3) >= 0.0 {
        return None;
    }
    Some([p0, p1, p2, p3])
}

/// Puts corners in clockwise image order (y down) starting anywhere.
fn clockwise(mut q: [Point2; 4]) -> [Point2; 4] {
    let c = centroid(&q);
    q.sort_by(|a, b| (a.y - c.y).atan2(a.x - c.x).total_cmp(&(b.y - c.y).atan2(b.x - c.x)));
    q
}

fn line_through(a: Point2, b: Point2) -> (Point2, Point2) {
    (a, (b - a) * (1.0 / (b - a).norm()))
}

fn intersect(l1: (Point2, Point2), l2: (Point2, Point2)) -> Option<Point2> {
    let den = l1.1.cross(l2.1);
    if den.abs() < 1e-9 {
        return None;
    }
    let t = (l2.0 - l1.0).cross(l2.1) / den;
    Some(l1.0 + l1.1 * t)
}

/// Total-least-squares line through points: (point, unit direction).
fn fit_line(pts: &[Point2]) -> Option<(Point2, Point2)> {
    if pts.len() < 2 {
        return None;
    }
    let c = centroid(pts);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some((c, Point2::new(angle.cos(), angle.sin())))
}

/// Moves each side of a rough quad onto the half-level crossing of the
/// dark-to-light transition and re-intersects the sides; two passes.
fn refine_quad(gray: &GrayImage, q: [Point2; 4]) -> Option<[Point2; 4]> {
    let mut q = q;
    for fine in [false, true, true] {
        q = refine_quad_once(gray, q, fine)?;
    }
    Some(q)
}

fn refine_quad_once(gray: &GrayImage, q: [Point2; 4], fine: bool) -> Option<[Point2; 4]> {
    let c = centroid(&q);
    let mut lines = Vec::with_capacity(4);
    for k in 0..4 {
        let (a, b) = (q[k], q[(k + 1) % 4]);
        let (_, dir) = line_through(a, b);
        let mut normal = Point2::new(dir.y, -dir.x);
        if normal.dot((a + b) * 0.5 - c) < 0.0 {
            normal = normal * -1.0;
        }
        let samples = (a.dist(b) as usize).max(12);
        let mut hits = Vec::new();
        for s in 0..samples {
            let t = 0.08 + 0.84 * s as f64 / (samples - 1) as f64;
            let base = a + (b - a) * t;
            let prof: Vec<f64> = (-40..=40)
                .map(|i| gray.sample_point(base + normal * (i as f64 * 0.1)))
                .collect();
            // Plateaus 2–3 px (fine) or 3–4 px either side of the edge.
            let (lo, hi) = if fine {
                (prof[10..=20].iter().sum::<f64>() / 11.0, prof[60..=70].iter().sum::<f64>() / 11.0)
            } else {
                (prof[..11].iter().sum::<f64>() / 11.0, prof[70..].iter().sum::<f64>() / 11.0)
            };
            if hi - lo < 0.1 {
                continue;
            }
            let best = if fine {
                // Area between the profile and the light level over ±2 px
                // equals the dark extent past -2; less phase-sensitive
                // than a level crossing on resampled images.
                let mut area = 0.0;
                for i in 20..=60 {
                    let wgt = if i == 20 || i == 60 { 0.05 } else { 0.1 };
                    area += wgt * (hi - prof[i]);
                }
                let off = area / (hi - lo) - 2.0;
                (off.abs() < 1.5).then_some(off)
            } else {
                crossing(&prof, 0.5 * (lo + hi))
            };
            if let Some(off) = best {
                hits.push(base + normal * off);
            }
        }
        if hits.len() < 4 {
            return None;
        }
        lines.push(fit_line(&hits)?);
    }
    let mut out = [Point2::default(); 4];
    for k in 0..4 {
        out[k] = intersect(lines[(k + 3) % 4], lines[k])?;
    }
    Some(out)
}

/// Rising level crossing nearest the profile middle, as an offset in px.
fn crossing(prof: &[f64], mid: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..prof.len() - 1 {
        let (v0, v1) = (prof[i], prof[i + 1]);
        if (v0 - mid) * (v1 - mid) <= 0.0 && v0 != v1 && v1 > v0 {
            let off = (i as f64 + (mid - v0) / (v1 - v0)) * 0.1 - 4.0;
            if best.is_none_or(|b| off.abs() < b.abs()) {
                best = Some(off);
            }
        }
    }
    best
}

/// Reads the 6×6 module raster through `h` (module units → image) and
/// returns the inner 4×4 code if the border is entirely dark.
fn read_code(gray: &GrayImage, h: &Homography) -> Option<u16> {
    let sample = |u: f64, v: f64| {
        let mut s = 0.0;
        for du in [-0.2, 0.0, 0.2] {
            for dv in [-0.2, 0.0, 0.2] {
                s += gray.sample_point(h.apply(Point2::new(u + du, v + dv)));
            }
        }
        s / 9.0
    };
    let mut modules = [[0.0; 6]; 6];
    for (r, row) in modules.iter_mut().enumerate() {
        for (c, m) in row.iter_mut().enumerate() {
            *m = sample(c as f64 + 0.5, r as f64 + 0.5);
        }
    }
    // Light level from the white quiet zone around the code.
    let mut quiet = Vec::new();
    for k in 0..6 {
        let t = k as f64 + 0.5;
        quiet.extend([sample(t, -0.5), sample(t, 6.5), sample(-0.5, t), sample(6.5, t)]);
    }
    let light = quiet.iter().sum::<f64>() / quiet.len() as f64;
    let mut border = Vec::new();
    for k in 0..6 {
        border.extend([modules[0][k], modules[5][k], modules[k][0], modules[k][5]]);
    }
    let dark = border.iter().sum::<f64>() / border.len() as f64;
    if light - dark < 0.1 {
        return None;
    }
    let thr = 0.5 * (light + dark);
    if border.iter().any(|&v| v >= thr) {
        return None;
    }
    let mut code = 0u16;
    for r in 0..4 {
        for c in 0..4 {
            if modules[r + 1][c + 1] >= thr {
                code |= 1 << (15 - (r * 4 + c));
            }
        }
    }
    Some(code)
}

fn candidate(gray: &GrayImage, region: &Region, pixels: &[usize], params: &MarkerParams) -> Option<MarkerDetection> {
    let w = gray.width;
    let bw = (region.col_max - region.col_min + 1) as f64;
    let bh = (region.row_max - region.row_min + 1) as f64;
    if bw.max(bh) > params.max_side * 1.5 || bw.min(bh) < params.min_side * 0.7 {
        return None;
    }
    // Outer pixel corners so the hull encloses whole pixels.
    let mut pts = Vec::with_capacity(pixels.len() * 4);
    for &k in pixels {
        let (x, y) = ((k % w) as f64, (k / w) as f64);
        for (dx, dy) in [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)] {
            pts.push(Point2::new(x + dx, y + dy));
        }
    }
    let hull = convex_hull(pts);
    let rough = clockwise(hull_quad(&hull)?);
    let sides: Vec<f64> = (0..4).map(|k| rough[k].dist(rough[(k + 1) % 4])).collect();
    let (lo, hi) = sides.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
    if lo < params.min_side || hi > params.max_side || hi / lo > params.max_aspect {
        return None;
    }
    let area = signed_area(&rough).abs();
    if (region.area as f64) < 0.4 * area {
        return None;
    }
    let quad = refine_quad(gray, rough)?;
    let module = [
        Point2::new(0.0, 0.0),
        Point2::new(6.0, 0.0),
        Point2::new(6.0, 6.0),
        Point2::new(0.0, 6.0),
    ];
    for k in 0..4 {
        let corners = [quad[k], quad[(k + 1) % 4], quad[(k + 2) % 4], quad[(k + 3) % 4]];
        let h = Homography::from_points(&module, &corners).ok()?;
        let Some(code) = read_code(gray, &h) else {
            continue;
        };
        if let Some(id) = DICTIONARY.iter().position(|&d| d == code) {
            return Some(MarkerDetection {
                id: id as u16,
                corners,
            });
        }
    }
    None
}

/// All decodable markers on a reflectance image, sorted by id. A duplicate id
/// keeps the larger quad.
pub fn find_markers(cube: &ImageCube, params: &MarkerParams) -> Vec<MarkerDetection> {
    find_markers_gray(&grayscale(cube), params)
}

pub fn find_markers_gray(gray: &GrayImage, params: &MarkerParams) -> Vec<MarkerDetection> {
    let dark = BinaryMask::from_fn(gray.height, gray.width, |r, c| gray.get(r, c) < params.dark_threshold);
    let comps = connected_components(&dark, Connectivity::Eight);
    let min_area = (0.3 * params.min_side * params.min_side) as usize;
    let max_area = (params.max_side * params.max_side) as usize;
    let mut found: Vec<MarkerDetection> = Vec::new();
    for region in &comps.regions {
        if region.area < min_area || region.area > max_area {
            continue;
        }
        let pixels = comps.pixels_of(region.label);
        if let Some(m) = candidate(gray, region, &pixels, params) {
            match found.iter_mut().find(|f| f.id == m.id) {
                Some(f) => {
                    if signed_area(&m.corners).abs() > signed_area(&f.corners).abs() {
                        *f = m;
                    }
                }
                None => found.push(m),
            }
        }
    }
    found.sort_by_key(|m| m.id);
    found
}

/// Markers of one dish image; anything but `params.expected` markers is an
/// error listing what was found.
pub fn detect_markers(cube: &ImageCube, params: &MarkerParams) -> Result<Vec<MarkerDetection>> {
    let found = find_markers(cube, params);
    if found.len() != params.expected {
        return Err(Error::MarkerCount {
            expected: params.expected,
            found: found.len(),
            ids: found.iter().map(|m| m.id).collect(),
        });
    }
    Ok(found)
}

pub fn load_marker_file(path: &Path) -> Result<Vec<MarkerDetection>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut markers: Vec<MarkerDetection> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for m in &markers {
        if signed_area(&m.corners) <= 0.0 {
            return Err(Error::Invalid(format!(
                "marker {} corners in {} are not clockwise",
                m.id,
                path.display()
            )));
        }
    }
    markers.sort_by_key(|m| m.id);
    Ok(markers)
}

pub fn save_marker_file(path: &Path, markers: &[MarkerDetection]) -> Result<()> {
    let text = serde_json::to_string_pretty(markers).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hamming(a: u16, b: u16) -> u32 {
        (a ^ b).count_ones()
    }

    #[test]
    fn dictionary_distances() {
        for (i, &a) in DICTIONARY.iter().enumerate() {
            let mut r = a;
            for _ in 0..3 {
                r = rotate_code(r);
                assert!(hamming(a, r) >= 4, "code {i} too close to its own rotation");
            }
            for &b in &DICTIONARY[i + 1..] {
                assert!(hamming(a, b) >= 8);
                let mut r = b;
                for _ in 0..4 {
                    assert!(hamming(a, r) >= 4);
                    r = rotate_code(r);
                }
            }
        }
    }

    #[test]
    fn four_rotations_are_identity() {
        for &c in &DICTIONARY {
            assert_eq!(rotate_code(rotate_code(rotate_code(rotate_code(c)))), c);
        }
        // Top-left bit moves to the top-right under a clockwise turn.
        assert_eq!(rotate_code(0x8000), 0x1000);
    }

    #[test]
    fn center_is_corner_mean() {
        let m = MarkerDetection {
            id: 0,
            corners: [
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
        };
        assert_eq!(m.center(), Point2::new(0.5, 0.5));
        let shifted = MarkerDetection {
            id: 0,
            corners: m.corners.map(|p| p + Point2::new(3.0, -2.0)),
        };
        assert_eq!(shifted.center(), Point2::new(3.5, -1.5));
    }

    #[test]
    fn homography_reprojects_corners() {
        let src = [
            Point2::new(0.0, 0.0),
            Point2::new(6.0, 0.0),
            Point2::new(6.0, 6.0),
            Point2::new(0.0, 6.0),
        ];
        let dst = [
            Point2::new(10.2, 5.1),
            Point2::new(40.7, 8.3),
            Point2::new(37.9, 39.0),
            Point2::new(8.8, 35.5),
        ];
        let h = Homography::from_points(&src, &dst).unwrap();
        for k in 0..4 {
            assert!(h.apply(src[k]).dist(dst[k]) < 1e-6);
        }
    }

    /// Paints a marker with 4 px modules, rotated by `turns` quarter turns,
    /// on a light background; returns the image and the canonical corners.
    fn painted(id: u16, turns: u8) -> (GrayImage, [Point2; 4]) {
        let code = DICTIONARY[id as usize];
        let (m, c) = (4.0, Point2::new(30.0, 30.0));
        let angle = turns as f64 * std::f64::consts::FRAC_PI_2 + 0.1;
        let module_at = |p: Point2| -> f64 {
            let q = (p - c).rotate(-angle);
            let (u, v) = (q.x / m + 3.0, q.y / m + 3.0);
            if !(0.0..6.0).contains(&u) || !(0.0..6.0).contains(&v) {
                return 0.8;
            }
            let (col, row) = (u as usize, v as usize);
            if row == 0 || row == 5 || col == 0 || col == 5 {
                return 0.05;
            }
            if (code >> (15 - ((row - 1) * 4 + col - 1))) & 1 == 1 {
                0.8
            } else {
                0.05
            }
        };
        let img = GrayImage::from_fn(60, 60, |r, col| {
            let mut s = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    let p = Point2::new(col as f64 - 0.375 + a as f64 * 0.25, r as f64 - 0.375 + b as f64 * 0.25);
                    s += module_at(p);
                }
            }
            s / 16.0
        });
        let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .map(|(u, v)| c + Point2::new(u * 3.0 * m, v * 3.0 * m).rotate(angle));
        (img, corners)
    }

    #[test]
    fn painted_marker_decodes_in_every_orientation() {
        for turns in 0..4 {
            let (img, truth) = painted(7, turns);
            let found = find_markers_gray(&img, &MarkerParams::default());
            assert_eq!(found.len(), 1, "turns {turns}");
            assert_eq!(found[0].id, 7);
            for k in 0..4 {
                assert!(found[0].corners[k].dist(truth[k]) < 0.5, "turns {turns}: {:?} vs {:?}", found[0].corners, truth);
            }
        }
    }

    #[test]
    fn blank_image_is_a_count_error() {
        let cube = ImageCube {
            reflectance: true,
            data: vec![0.5; 40 * 40 * 3],
            ..ImageCube::zeros(40, 40, 3, 8, crate::pixcodec::Modality::Rgb)
        };
        match detect_markers(&cube, &MarkerParams::default()) {
            Err(Error::MarkerCount { found: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn marker_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let (_, corners) = painted(3, 0);
        let ms = vec![MarkerDetection { id: 3, corners }];
        save_marker_file(&path, &ms).unwrap();
        assert_eq!(load_marker_file(&path).unwrap(), ms);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"id\": 3") && text.contains("\"corners\""));
    }
}
