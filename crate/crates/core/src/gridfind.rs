//! One-time detection of the grid lattice on a reference plate (white filter
//! paper, no kernels).
//!
//! Orientation comes from the two markers: each marker picks a base line
//! through its two nearest intersections, the intersections along that base
//! line are enumerated by distance from the marker, and the other line through
//! each enumerated point gets that enumeration as its lattice coordinate.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fiducial::{find_markers, MarkerDetection, MarkerParams};
use crate::geometry::Point2;
use crate::pixcodec::ImageCube;
use crate::vision::{
    average_similar_lines, edge_detect_with_gradient, gaussian_smooth, grayscale, hough_circles_gradient,
    hough_lines, line_intersection, line_intersections, select_dish_circle, BinaryMask, Circle, EdgeParams,
    GrayImage, HoughCircleParams, HoughLine, HoughLineParams, Intersection,
};
use crate::{Error, Result};

/// Lattice points that are never moved by refinement.
pub const DEFAULT_EXCLUDED: [(usize, usize); 8] = [(0, 0), (0, 5), (5, 0), (5, 5), (3, 0), (2, 0), (0, 3), (0, 2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridParams {
    /// Grid lines per axis.
    pub lines: usize,
    /// Accepted dish radius as fractions of the plate height.
    pub dish_band: (f64, f64),
    pub smooth_sigma: f64,
    pub edges: EdgeParams,
    pub circle_min_votes: u32,
    /// Circle candidates below this fraction of the strongest are dropped.
    pub circle_relative_votes: f64,
    /// Radial search half-width when refitting the dish to its rim.
    pub circle_refit_band: f64,
    /// Edges closer than this to the dish rim are ignored for lines.
    pub rim_margin: f64,
    /// Marker quads are masked after scaling about their center by this.
    pub marker_mask_scale: f64,
    pub hough: HoughLineParams,
    pub average_rho_tol: f64,
    pub average_theta_tol_deg: f64,
    /// Flank offset and contrast of the dark bars, and the fraction of a
    /// line's chord that must run along one.
    pub bar_flank: f64,
    pub bar_contrast: f64,
    pub bar_support: f64,
    pub refine_sigma: f64,
    pub refine_radius: f64,
    pub excluded: Vec<(usize, usize)>,
    pub markers: MarkerParams,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            lines: 6,
            dish_band: (0.25, 0.48),
            smooth_sigma: 1.5,
            edges: EdgeParams::default(),
            circle_min_votes: 40,
            circle_relative_votes: 0.5,
            circle_refit_band: 5.0,
            rim_margin: 6.0,
            marker_mask_scale: 1.45,
            hough: HoughLineParams::default(),
            average_rho_tol: 8.0,
            average_theta_tol_deg: 2.0,
            bar_flank: 7.0,
            bar_contrast: 0.1,
            bar_support: 0.5,
            refine_sigma: 3.0,
            refine_radius: 15.0,
            excluded: DEFAULT_EXCLUDED.to_vec(),
            markers: MarkerParams::default(),
        }
    }
}

/// Lattice of `lines × lines` points, indexed `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub dish_id: String,
    pub lines: usize,
    /// Row-major by `y`: `points[y * lines + x]`.
    pub points: Vec<Point2>,
    pub markers: Vec<MarkerDetection>,
    pub chessboard_centers: Vec<Point2>,
    pub dish_circle: Circle,
}

impl GridModel {
    pub fn point(&self, x: usize, y: usize) -> Point2 {
        self.points[y * self.lines + x]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct GridModelFile {
    #[serde(default)]
    dish_id: String,
    points: BTreeMap<String, Point2>,
    markers: Vec<MarkerDetection>,
    chessboard_centers: Vec<Point2>,
    dish_circle: Circle,
}

impl Serialize for GridModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut points = BTreeMap::new();
        for y in 0..self.lines {
            for x in 0..self.lines {
                points.insert(format!("{x},{y}"), self.point(x, y));
            }
        }
        GridModelFile {
            dish_id: self.dish_id.clone(),
            points,
            markers: self.markers.clone(),
            chessboard_centers: self.chessboard_centers.clone(),
            dish_circle: self.dish_circle,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridModel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let f = GridModelFile::deserialize(d)?;
        let lines = (f.points.len() as f64).sqrt().round() as usize;
        if lines * lines != f.points.len() || lines < 2 {
            return Err(D::Error::custom(format!("{} points do not form a square lattice", f.points.len())));
        }
        let mut points = vec![None; lines * lines];
        for (key, p) in &f.points {
            let parsed = key
                .split_once(',')
                .and_then(|(x, y)| Some((x.trim().parse::<usize>().ok()?, y.trim().parse::<usize>().ok()?)));
            match parsed {
                Some((x, y)) if x < lines && y < lines => points[y * lines + x] = Some(*p),
                _ => return Err(D::Error::custom(format!("bad lattice key {key:?}"))),
            }
        }
        let points = points
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| D::Error::custom("duplicate lattice keys"))?;
        Ok(GridModel {
            dish_id: f.dish_id,
            lines,
            points,
            markers: f.markers,
            chessboard_centers: f.chessboard_centers,
            dish_circle: f.dish_circle,
        })
    }
}

/// Smooth, detect edges, vote for circles and keep the in-band circle nearest
/// the image center.
pub fn find_dish(gray: &GrayImage, params: &GridParams) -> Result<Circle> {
    let h = gray.height as f64;
    let band = (params.dish_band.0 * h, params.dish_band.1 * h);
    let smooth = gaussian_smooth(gray, params.smooth_sigma);
    let (edges, grad) = edge_detect_with_gradient(&smooth, &params.edges);
    let circles = hough_circles_gradient(
        &edges,
        &grad,
        &HoughCircleParams {
            r_min: band.0,
            r_max: band.1,
            min_votes: params.circle_min_votes,
            min_center_dist: 10.0,
            max_circles: 10,
        },
    );
    let strongest = circles.iter().map(|c| c.votes).max().unwrap_or(0) as f64;
    let strong: Vec<Circle> = circles
        .into_iter()
        .filter(|c| c.votes as f64 >= params.circle_relative_votes * strongest)
        .collect();
    let dish = select_dish_circle(
        &strong,
        band,
        Point2::new(gray.width as f64 / 2.0, gray.height as f64 / 2.0),
    )?;
    Ok(refit_rim(&dish, &smooth, params.circle_refit_band))
}

fn kasa_fit(pts: &[Point2]) -> Option<Circle> {
    if pts.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for p in pts {
        let row = Vector3::new(p.x, p.y, 1.0);
        ata += row * row.transpose();
        atb += row * -(p.x * p.x + p.y * p.y);
    }
    let sol = ata.lu().solve(&atb)?;
    let center = Point2::new(-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = center.x * center.x + center.y * center.y - sol[2];
    (r2 > 0.0).then(|| Circle::new(center, r2.sqrt()))
}

/// Fits a circle to the dark rim ridge: per angle, the radial intensity
/// minimum within `band` of `circle`; points far from the first fit are
/// dropped before the final fit.
fn refit_rim(circle: &Circle, smooth: &GrayImage, band: f64) -> Circle {
    const ANGLES: usize = 720;
    const STEP: f64 = 0.25;
    let (w, h) = (smooth.width as f64, smooth.height as f64);
    let mut current = *circle;
    for _ in 0..2 {
        let mut pts = Vec::with_capacity(ANGLES);
        for k in 0..ANGLES {
            let a = k as f64 * 2.0 * std::f64::consts::PI / ANGLES as f64;
            let dir = Point2::new(a.cos(), a.sin());
            let n = (2.0 * band / STEP).round() as usize;
            let at = |i: usize| current.center + dir * (current.radius - band + i as f64 * STEP);
            if (0..=n).map(at).any(|p| p.x < 0.0 || p.y < 0.0 || p.x > w - 1.0 || p.y > h - 1.0) {
                continue;
            }
            let prof: Vec<f64> = (0..=n).map(|i| smooth.sample_point(at(i))).collect();
            let i = (0..=n).min_by(|&x, &y| prof[x].total_cmp(&prof[y])).expect("non-empty");
            if i == 0 || i == n {
                continue;
            }
            let den = prof[i - 1] - 2.0 * prof[i] + prof[i + 1];
            let off = if den > 0.0 { 0.5 * (prof[i - 1] - prof[i + 1]) / den } else { 0.0 };
            pts.push(current.center + dir * (current.radius - band + (i as f64 + off) * STEP));
        }
        let Some(first) = kasa_fit(&pts) else { break };
        pts.retain(|p| (p.dist(first.center) - first.radius).abs() <= 1.5);
        let Some(fit) = kasa_fit(&pts) else { break };
        current = Circle {
            votes: circle.votes,
            ..fit
        };
    }
    current
}

/// Whether two lines agree within the tolerances, comparing across the
/// θ = 0/π seam.
fn same_line(a: &HoughLine, b: &HoughLine, rho_tol: f64, theta_tol: f64) -> bool {
    let dt = (a.theta - b.theta).abs();
    if dt > std::f64::consts::FRAC_PI_2 {
        std::f64::consts::PI - dt <= theta_tol && (a.rho + b.rho).abs() <= rho_tol
    } else {
        dt <= theta_tol && (a.rho - b.rho).abs() <= rho_tol
    }
}

fn inside_convex(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let c = (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]);
        if c != 0.0 {
            if sign == 0.0 {
                sign = c.signum();
            } else if c.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Total-least-squares line through `pts`.
fn tls_line(pts: &[Point2]) -> HoughLine {
    let n = pts.len() as f64;
    let m = pts.iter().fold(Point2::default(), |a, &p| a + p) * (1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = *p - m;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // Normal is the eigenvector of the smaller eigenvalue.
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy) + std::f64::consts::FRAC_PI_2;
    HoughLine::new(Point2::new(theta.cos(), theta.sin()).dot(m), theta)
}

/// Chord of `line` inside the circle: foot of the perpendicular from
/// `center`, unit direction and half-length.
fn chord(line: &HoughLine, center: Point2, radius: f64) -> Option<(Point2, Point2, f64)> {
    let n = line.normal();
    let foot = center + n * -line.distance(center);
    let half = radius * radius - foot.dist(center).powi(2);
    (half > 0.0).then(|| (foot, Point2::new(-n.y, n.x), half.sqrt()))
}

/// Moves `line` onto the dark ridge it runs along: the darkest point across
/// the line is taken every 2 px where both flanks are brighter by
/// `bar_contrast`, and a line is fitted with outliers dropped.
fn refit_to_ridge(line: &HoughLine, smooth: &GrayImage, dish: &Circle, masks: &[Vec<Point2>], params: &GridParams) -> HoughLine {
    const STEP: f64 = 0.5;
    let k = (params.bar_flank / STEP).round() as usize;
    let mut current = *line;
    for _ in 0..3 {
        let Some((foot, dir, half)) = chord(&current, dish.center, dish.radius - params.rim_margin) else {
            break;
        };
        let n = current.normal();
        let mut pts = Vec::new();
        let mut t = -half;
        while t <= half {
            let p = foot + dir * t;
            t += 2.0;
            if masks.iter().any(|q| inside_convex(q, p)) {
                continue;
            }
            let prof: Vec<f64> = (0..=2 * k)
                .map(|i| smooth.sample_point(p + n * ((i as f64 - k as f64) * STEP)))
                .collect();
            let i = (0..=2 * k).min_by(|&a, &b| prof[a].total_cmp(&prof[b])).expect("non-empty");
            if i == 0 || i == 2 * k || prof[0].min(prof[2 * k]) < prof[i] + params.bar_contrast {
                continue;
            }
            let den = prof[i - 1] - 2.0 * prof[i] + prof[i + 1];
            let off = if den > 0.0 { 0.5 * (prof[i - 1] - prof[i + 1]) / den } else { 0.0 };
            pts.push(p + n * ((i as f64 + off - k as f64) * STEP));
        }
        if pts.len() < 10 {
            break;
        }
        let first = tls_line(&pts);
        pts.retain(|p| first.distance(*p).abs() <= 1.5);
        if pts.len() < 10 {
            break;
        }
        current = HoughLine {
            votes: line.votes,
            ..tls_line(&pts)
        };
    }
    current
}

/// Edges inside the dish (away from the rim) with marker quads masked out,
/// fed to the line transform; border pairs are averaged into centerlines,
/// moved onto their bars and deduplicated.
pub fn find_grid_lines(gray: &GrayImage, dish: &Circle, markers: &[MarkerDetection], params: &GridParams) -> Vec<HoughLine> {
    let smooth = gaussian_smooth(gray, params.smooth_sigma);
    let (edges, _) = edge_detect_with_gradient(&smooth, &params.edges);
    let masks: Vec<Vec<Point2>> = markers
        .iter()
        .map(|m| {
            let c = m.center();
            m.corners.iter().map(|&p| c + (p - c) * params.marker_mask_scale).collect()
        })
        .collect();
    let keep_r = dish.radius - params.rim_margin;
    let masked = BinaryMask::from_fn(edges.height, edges.width, |r, c| {
        if !edges.get(r, c) {
            return false;
        }
        let p = Point2::new(c as f64, r as f64);
        p.dist(dish.center) < keep_r && !masks.iter().any(|q| inside_convex(q, p))
    });
    let raw = hough_lines(&masked, &params.hough);
    let theta_tol = params.average_theta_tol_deg.to_radians();
    let mut refit: Vec<HoughLine> = average_similar_lines(&raw, params.average_rho_tol, theta_tol)
        .iter()
        .map(|l| refit_to_ridge(l, &smooth, dish, &masks, params))
        .collect();
    // A diagonal through both borders of one bar refits onto that bar.
    let mut order: Vec<usize> = (0..refit.len()).collect();
    order.sort_by(|&a, &b| refit[b].votes.cmp(&refit[a].votes).then(a.cmp(&b)));
    let mut keep = vec![false; refit.len()];
    for &i in &order {
        keep[i] = !(0..refit.len()).any(|j| keep[j] && same_line(&refit[i], &refit[j], params.average_rho_tol, theta_tol));
    }
    let mut k = 0;
    refit.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    refit.retain(|l| bar_support(l, &smooth, dish.center, keep_r, &masks, params) >= params.bar_support);
    refit
}

/// Fraction of the in-dish, unmasked chord of `line` where the centerline is
/// darker than both flanks by `bar_contrast`.
fn bar_support(
    line: &HoughLine,
    smooth: &GrayImage,
    center: Point2,
    radius: f64,
    masks: &[Vec<Point2>],
    params: &GridParams,
) -> f64 {
    let Some((foot, dir, half)) = chord(line, center, radius) else {
        return 0.0;
    };
    let n = line.normal();
    let (mut total, mut dark) = (0usize, 0usize);
    let mut t = -half;
    while t <= half {
        let p = foot + dir * t;
        t += 1.0;
        if masks.iter().any(|q| inside_convex(q, p)) {
            continue;
        }
        total += 1;
        let side = smooth.sample_point(p + n * params.bar_flank).min(smooth.sample_point(p - n * params.bar_flank));
        if smooth.sample_point(p) + params.bar_contrast < side {
            dark += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        dark as f64 / total as f64
    }
}

/// One marker's base line and the enumerated cross lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedAxis {
    pub anchor_marker_id: u16,
    pub base_line: HoughLine,
    /// Index of the base line in the line list.
    pub base: usize,
    /// Points on the base line, nearest to the marker first.
    pub ordered_points: Vec<Point2>,
    /// For each ordered point, the index of its other line.
    pub cross_lines: Vec<usize>,
}

/// Axis of one marker. The base line goes through the first (`first_of_pair`)
/// or second of the two intersections nearest to the marker that face the
/// dish center.
pub fn orient_axis(
    marker: &MarkerDetection,
    dish: &Circle,
    lines: &[HoughLine],
    intersections: &[Intersection],
    n: usize,
    first_of_pair: bool,
) -> Result<OrientedAxis> {
    let c = marker.center();
    let red = dish.center - c;
    let ahead = |p: Point2| (p - c).dot(red) > 0.0;
    let by_distance = |idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| {
            intersections[a].point.dist(c).total_cmp(&intersections[b].point.dist(c)).then(a.cmp(&b))
        })
    };
    let mut cand: Vec<usize> = (0..intersections.len()).filter(|&k| ahead(intersections[k].point)).collect();
    by_distance(&mut cand);
    if cand.len() < 2 {
        return Err(Error::Orientation(format!(
            "marker {}: fewer than two intersections face the dish center",
            marker.id
        )));
    }
    let (a, b) = (&intersections[cand[0]], &intersections[cand[1]]);
    let shared: Vec<usize> = [a.lines.0, a.lines.1].into_iter().filter(|&l| b.lies_on(l)).collect();
    if shared.len() != 1 {
        return Err(Error::Orientation(format!(
            "marker {}: nearest intersections share {} lines",
            marker.id,
            shared.len()
        )));
    }
    let chosen = if first_of_pair { a } else { b };
    let base = chosen.other_line(shared[0]).expect("chosen point lies on the shared line");
    let mut on_base: Vec<usize> = (0..intersections.len())
        .filter(|&k| intersections[k].lies_on(base) && ahead(intersections[k].point))
        .collect();
    by_distance(&mut on_base);
    if on_base.len() < n {
        return Err(Error::GridIncomplete(format!(
            "marker {}: {} of {n} points on the base line",
            marker.id,
            on_base.len()
        )));
    }
    on_base.truncate(n);
    Ok(OrientedAxis {
        anchor_marker_id: marker.id,
        base_line: lines[base],
        base,
        ordered_points: on_base.iter().map(|&k| intersections[k].point).collect(),
        cross_lines: on_base
            .iter()
            .map(|&k| intersections[k].other_line(base).expect("point lies on the base line"))
            .collect(),
    })
}

/// Axis for the lowest-id marker then the highest-id marker. Each axis is
/// computed from both members of its nearest pair and the two must agree.
pub fn orient_axes(
    lines: &[HoughLine],
    intersections: &[Intersection],
    markers: &[MarkerDetection],
    dish: &Circle,
    n: usize,
) -> Result<[OrientedAxis; 2]> {
    if markers.len() < 2 {
        return Err(Error::Orientation(format!("need two markers, have {}", markers.len())));
    }
    if intersections.len() < 10 {
        return Err(Error::Orientation(format!("only {} intersections", intersections.len())));
    }
    let lo = markers.iter().min_by_key(|m| m.id).expect("non-empty");
    let hi = markers.iter().max_by_key(|m| m.id).expect("non-empty");
    let axis = |m: &MarkerDetection| -> Result<OrientedAxis> {
        let first = orient_axis(m, dish, lines, intersections, n, true)?;
        let second = orient_axis(m, dish, lines, intersections, n, false)?;
        if first.cross_lines != second.cross_lines {
            return Err(Error::Orientation(format!(
                "marker {}: lattice depends on the pair member chosen",
                m.id
            )));
        }
        Ok(first)
    };
    Ok([axis(lo)?, axis(hi)?])
}

/// Intersects the lowest-id marker's cross lines (constant `y`) with the
/// highest-id marker's (constant `x`).
pub fn assign_lattice(axes: &[OrientedAxis; 2], lines: &[HoughLine]) -> Result<Vec<Point2>> {
    let (ys, xs) = (&axes[0].cross_lines, &axes[1].cross_lines);
    if ys.iter().any(|l| xs.contains(l)) {
        return Err(Error::GridIncomplete("both axes enumerate the same line family".into()));
    }
    let n = xs.len();
    let mut pts = Vec::with_capacity(n * n);
    for &ly in ys {
        for &lx in xs {
            let p = line_intersection(&lines[lx], &lines[ly])
                .ok_or_else(|| Error::GridIncomplete("parallel lattice lines".into()))?;
            pts.push(p);
        }
    }
    Ok(pts)
}

fn check_lattice(points: &[Point2], n: usize, dish: &Circle) -> Result<()> {
    let limit = dish.radius * 1.1;
    if let Some(p) = points.iter().find(|p| p.dist(dish.center) > limit) {
        return Err(Error::GridIncomplete(format!("lattice point {p:?} lies outside the dish")));
    }
    for y in 0..n {
        let dir = points[y * n + n - 1] - points[y * n];
        for x in 1..n {
            if (points[y * n + x] - points[y * n + x - 1]).dot(dir) <= 0.0 {
                return Err(Error::GridIncomplete(format!("row {y} is not monotone")));
            }
        }
    }
    Ok(())
}

/// Integer steepest descent on `smooth` from `p`, staying within `radius`,
/// followed by a parabolic sub-pixel step. Returns `p` unchanged when no
/// neighbor is lower.
fn descend(smooth: &GrayImage, p: Point2, radius: f64) -> Point2 {
    let (h, w) = (smooth.height as i64, smooth.width as i64);
    let (mut r, mut c) = (p.y.round() as i64, p.x.round() as i64);
    if r < 1 || c < 1 || r >= h - 1 || c >= w - 1 {
        return p;
    }
    let start = (r, c);
    let mut moved = false;
    loop {
        let v = smooth.get(r as usize, c as usize);
        let mut best = (v, r, c);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 1 || nc < 1 || nr >= h - 1 || nc >= w - 1 {
                    continue;
                }
                if (((nr - start.0).pow(2) + (nc - start.1).pow(2)) as f64).sqrt() > radius {
                    continue;
                }
                let nv = smooth.get(nr as usize, nc as usize);
                if nv < best.0 {
                    best = (nv, nr, nc);
                }
            }
        }
        if (best.1, best.2) == (r, c) {
            break;
        }
        (r, c) = (best.1, best.2);
        moved = true;
    }
    if !moved {
        return p;
    }
    let g = |rr: i64, cc: i64| smooth.get(rr as usize, cc as usize);
    let sub = |m: f64, z: f64, p: f64| {
        let den = m - 2.0 * z + p;
        if den > 0.0 {
            (0.5 * (m - p) / den).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    };
    let dx = sub(g(r, c - 1), g(r, c), g(r, c + 1));
    let dy = sub(g(r - 1, c), g(r, c), g(r + 1, c));
    Point2::new(c as f64 + dx, r as f64 + dy)
}

/// Moves every non-excluded lattice point to the local intensity minimum of
/// the σ-smoothed image within `radius`.
pub fn refine_to_intensity_minima(
    points: &[Point2],
    n: usize,
    gray: &GrayImage,
    excluded: &[(usize, usize)],
    sigma: f64,
    radius: f64,
) -> Vec<Point2> {
    let smooth = gaussian_smooth(gray, sigma);
    points
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            if excluded.contains(&(k % n, k / n)) {
                p
            } else {
                descend(&smooth, p, radius)
            }
        })
        .collect()
}

/// Full reference-plate detection.
pub fn detect_grid(plate: &ImageCube, chessboard_centers: &[Point2], params: &GridParams) -> Result<GridModel> {
    detect_grid_with_markers(plate, find_markers(plate, &params.markers), chessboard_centers, params)
}

/// [`detect_grid`] with markers supplied by the caller (e.g. from a marker
/// file) instead of detected.
pub fn detect_grid_with_markers(
    plate: &ImageCube,
    mut markers: Vec<MarkerDetection>,
    chessboard_centers: &[Point2],
    params: &GridParams,
) -> Result<GridModel> {
    let gray = grayscale(plate);
    markers.sort_by_key(|m| m.id);
    if markers.len() < 2 {
        return Err(Error::MarkerCount {
            expected: 2,
            found: markers.len(),
            ids: markers.iter().map(|m| m.id).collect(),
        });
    }
    let dish = find_dish(&gray, params)?;
    let lines = find_grid_lines(&gray, &dish, &markers, params);
    let intersections = line_intersections(&lines, gray.width, gray.height);
    let axes = orient_axes(&lines, &intersections, &markers, &dish, params.lines)?;
    let raw = assign_lattice(&axes, &lines)?;
    check_lattice(&raw, params.lines, &dish)?;
    let points = refine_to_intensity_minima(
        &raw,
        params.lines,
        &gray,
        &params.excluded,
        params.refine_sigma,
        params.refine_radius,
    );
    // Only the two anchor markers are kept.
    let (lo, hi) = (axes[0].anchor_marker_id, axes[1].anchor_marker_id);
    markers.retain(|m| m.id == lo || m.id == hi);
    Ok(GridModel {
        dish_id: String::new(),
        lines: params.lines,
        points,
        markers,
        chessboard_centers: chessboard_centers.to_vec(),
        dish_circle: dish,
    })
}
