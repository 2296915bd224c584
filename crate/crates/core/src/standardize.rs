//! White/dark correction and pixel-size standardization of raw line-scan
//! frames.
//!
//! A raw frame shows the plate between two white reference strips. The strips
//! give a per-row, per-channel white level; HSI frames also come with a
//! shutter-closed dark frame. After correction the plate is cropped to the
//! strips and squeezed horizontally so that the chessboard squares become
//! square.

use log::warn;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, Point2};
use crate::pixcodec::{ImageCube, Modality};
use crate::vision::{
    binarize, bilinear_resize_horizontal, connected_components, gaussian_smooth, grayscale, largest_components,
    otsu_threshold, row_median, row_quantile, BinaryMask, Connectivity, GrayImage, HorizontalResize,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChessboardParams {
    /// Squares per board side.
    pub squares: usize,
    pub smooth_sigma: f64,
    /// Saddle response kept relative to the strongest one.
    pub min_response: f64,
    /// Single-linkage distance for grouping corners into boards.
    pub link_distance: f64,
    /// Smallest accepted corner spacing; finer patterns (marker modules)
    /// are not boards.
    pub min_spacing: f64,
}

impl Default for ChessboardParams {
    fn default() -> Self {
        Self {
            squares: 4,
            smooth_sigma: 1.5,
            min_response: 0.2,
            link_distance: 24.0,
            min_spacing: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandardizeParams {
    pub otsu_bins: usize,
    pub white_quantile: f64,
    /// Clamp corrected values to `[0, 1]`.
    pub clamp: bool,
    pub chessboard: ChessboardParams,
}

impl Default for StandardizeParams {
    fn default() -> Self {
        Self {
            otsu_bins: 256,
            white_quantile: 0.75,
            clamp: false,
            chessboard: ChessboardParams::default(),
        }
    }
}

/// The two white strips and the plate rectangle they bound (inclusive).
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteReferences {
    pub mask: BinaryMask,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

pub fn locate_white_references(raw: &ImageCube, bins: usize) -> Result<WhiteReferences> {
    let gray = grayscale(raw);
    let t = otsu_threshold(&gray, bins).map_err(|_| Error::ReferenceNotFound("frame is constant".into()))?;
    let comps = connected_components(&binarize(&gray, t.threshold), Connectivity::Eight);
    let mask = largest_components(&comps, 2).map_err(|_| {
        Error::ReferenceNotFound(format!("expected two bright strips, found {}", comps.regions.len()))
    })?;
    let (r0, r1, c0, c1) = mask.bounding_box().expect("two regions are non-empty");
    Ok(WhiteReferences {
        mask,
        rows: (r0, r1),
        cols: (c0, c1),
    })
}

/// Per-row, per-channel white and dark levels for the rows the white mask
/// touches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowReferences {
    pub rows: Vec<usize>,
    pub white: Vec<Vec<f64>>,
    pub dark: Vec<Vec<f64>>,
}

impl RowReferences {
    /// Index into `rows` for raw row `r`, falling back to the nearest
    /// retained row.
    fn slot(&self, r: usize) -> usize {
        match self.rows.binary_search(&r) {
            Ok(k) => k,
            Err(k) => {
                warn!("raw row {r} has no white reference; using the nearest retained row");
                if k == 0 {
                    0
                } else if k == self.rows.len() || r - self.rows[k - 1] <= self.rows[k] - r {
                    k - 1
                } else {
                    k
                }
            }
        }
    }
}

/// White = `q`-quantile over the strip pixels of each row; dark = row median of
/// the dark frame restricted to the same rows, or zero when there is no dark
/// frame (the RGB camera has no dark current).
pub fn build_row_references(
    raw: &ImageCube,
    white_mask: &BinaryMask,
    dark_frame: Option<&ImageCube>,
    q: f64,
) -> Result<RowReferences> {
    let white_rows = row_quantile(raw, white_mask, q);
    let occupied = white_mask.occupied_rows();
    let dark_rows = match dark_frame {
        Some(d) => {
            if (d.height, d.channels) != (raw.height, raw.channels) {
                return Err(Error::Invalid(format!(
                    "dark frame is {}x{}x{}, raw frame is {}x{}x{}",
                    d.height, d.width, d.channels, raw.height, raw.width, raw.channels
                )));
            }
            Some(row_median(d, |r| occupied[r]))
        }
        None => None,
    };
    let mut refs = RowReferences {
        rows: Vec::new(),
        white: Vec::new(),
        dark: Vec::new(),
    };
    for (r, w) in white_rows.into_iter().enumerate() {
        let Some(w) = w else { continue };
        let d = match &dark_rows {
            Some(rows) => rows[r].clone().expect("dark rows follow the white mask"),
            None => vec![0.0; w.len()],
        };
        for (c, (&wv, &dv)) in w.iter().zip(&d).enumerate() {
            if wv <= dv {
                return Err(Error::InvalidReference {
                    row: r,
                    channel: c,
                    white: wv,
                    dark: dv,
                });
            }
        }
        refs.rows.push(r);
        refs.white.push(w);
        refs.dark.push(d);
    }
    if refs.rows.is_empty() {
        return Err(Error::ReferenceNotFound("white mask is empty".into()));
    }
    Ok(refs)
}

/// `(I − D) / (W − D)`.
#[inline]
pub fn correct_value(raw: f64, white: f64, dark: f64) -> f64 {
    (raw - dark) / (white - dark)
}

/// A corrected, cropped and possibly resized plate with the mapping back to
/// its raw frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateImage {
    pub cube: ImageCube,
    /// `(row, col)` of the plate's top-left pixel in the raw frame.
    pub crop_origin: (usize, usize),
    /// Horizontal scale applied after cropping.
    pub size_factor: f64,
    pub resize: HorizontalResize,
}

impl PlateImage {
    pub fn raw_to_plate(&self, p: Point2) -> Point2 {
        Point2::new(
            self.resize.to_dst_x(p.x - self.crop_origin.1 as f64),
            p.y - self.crop_origin.0 as f64,
        )
    }

    pub fn plate_to_raw(&self, p: Point2) -> Point2 {
        Point2::new(
            self.resize.to_src_x(p.x) + self.crop_origin.1 as f64,
            p.y + self.crop_origin.0 as f64,
        )
    }

    pub fn gray(&self) -> GrayImage {
        grayscale(&self.cube)
    }
}

/// Crops the raw frame to `rows × cols` (inclusive) and applies the row
/// references per pixel and channel.
pub fn correct_intensity(
    raw: &ImageCube,
    refs: &RowReferences,
    rows: (usize, usize),
    cols: (usize, usize),
    clamp: bool,
) -> Result<PlateImage> {
    let crop = raw.crop(rows.0..rows.1 + 1, cols.0..cols.1 + 1)?;
    let ch = crop.channels;
    let mut data = Vec::with_capacity(crop.data.len());
    for r in 0..crop.height {
        let k = refs.slot(r + rows.0);
        let (w, d) = (&refs.white[k], &refs.dark[k]);
        if w.len() != ch {
            return Err(Error::Invalid(format!("references have {} channels, frame has {ch}", w.len())));
        }
        for c in 0..crop.width {
            for (i, &v) in crop.pixel(r, c).iter().enumerate() {
                let mut x = correct_value(v as f64, w[i], d[i]);
                if clamp {
                    x = x.clamp(0.0, 1.0);
                }
                data.push(x as f32);
            }
        }
    }
    let mut cube = crop.with_data(data);
    cube.reflectance = true;
    Ok(PlateImage {
        resize: HorizontalResize::identity(cube.width),
        cube,
        crop_origin: (rows.0, cols.0),
        size_factor: 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chessboard {
    /// Inner corners, row-major.
    pub corners: Vec<Point2>,
    pub center: Point2,
    pub square_width: f64,
    pub square_height: f64,
}

fn saddle_response(g: &GrayImage) -> Vec<f64> {
    let (h, w) = (g.height, g.width);
    let mut out = vec![0.0; h * w];
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let v = g.get(r, c);
            let fxx = g.get(r, c + 1) - 2.0 * v + g.get(r, c - 1);
            let fyy = g.get(r + 1, c) - 2.0 * v + g.get(r - 1, c);
            let fxy = (g.get(r + 1, c + 1) - g.get(r - 1, c + 1) - g.get(r + 1, c - 1) + g.get(r - 1, c - 1)) / 4.0;
            out[r * w + c] = (fxy * fxy - fxx * fyy).max(0.0);
        }
    }
    out
}

/// Saddle point of a quadratic fitted to the 5×5 neighborhood of `(r, c)`.
fn quadratic_saddle(g: &GrayImage, r: usize, c: usize) -> Option<Point2> {
    let mut ata = SMatrix::<f64, 6, 6>::zeros();
    let mut atb = SVector::<f64, 6>::zeros();
    for dr in -2i64..=2 {
        for dc in -2i64..=2 {
            let (x, y) = (dc as f64, dr as f64);
            let row = SVector::<f64, 6>::from([x * x, x * y, y * y, x, y, 1.0]);
            ata += row * row.transpose();
            atb += row * g.get((r as i64 + dr) as usize, (c as i64 + dc) as usize);
        }
    }
    let p = ata.lu().solve(&atb)?;
    let (a, b, cc, d, e) = (p[0], p[1], p[2], p[3], p[4]);
    let det = 4.0 * a * cc - b * b;
    if det >= 0.0 {
        return None;
    }
    let x = (-2.0 * cc * d + b * e) / det;
    let y = (-2.0 * a * e + b * d) / det;
    Some(Point2::new(c as f64 + x, r as f64 + y))
}

struct Corner {
    p: Point2,
    response: f64,
}

fn saddle_corners(g: &GrayImage, params: &ChessboardParams) -> Vec<Corner> {
    let s = gaussian_smooth(g, params.smooth_sigma);
    let resp = saddle_response(&s);
    let max = resp.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let (h, w) = (s.height, s.width);
    let mut out = Vec::new();
    for r in 3..h.saturating_sub(3) {
        for c in 3..w.saturating_sub(3) {
            let k = r * w + c;
            let v = resp[k];
            if v < params.min_response * max {
                continue;
            }
            let is_max = (-2i64..=2).all(|dr| {
                (-2i64..=2).all(|dc| {
                    let n = ((r as i64 + dr) as usize) * w + (c as i64 + dc) as usize;
                    n == k || resp[n] < v || (resp[n] == v && n > k)
                })
            });
            if !is_max {
                continue;
            }
            let (mut rr, mut cc) = (r, c);
            let mut found = None;
            for _ in 0..3 {
                let Some(p) = quadratic_saddle(&s, rr, cc) else { break };
                let (nr, nc) = (p.y.round(), p.x.round());
                if nr < 2.0 || nc < 2.0 || nr >= (h - 2) as f64 || nc >= (w - 2) as f64 {
                    break;
                }
                if (nr as usize, nc as usize) == (rr, cc) {
                    found = Some(p);
                    break;
                }
                (rr, cc) = (nr as usize, nc as usize);
                found = Some(p);
            }
            if let Some(p) = found {
                if p.dist(Point2::new(c as f64, r as f64)) <= 2.5 {
                    out.push(Corner { p, response: v });
                }
            }
        }
    }
    out
}

fn clusters(corners: &[Corner], link: f64) -> Vec<Vec<usize>> {
    let n = corners.len();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        label[s] = id;
        let mut k = 0;
        while k < members.len() {
            let i = members[k];
            for j in 0..n {
                if label[j] == usize::MAX && corners[i].p.dist(corners[j].p) <= link {
                    label[j] = id;
                    members.push(j);
                }
            }
            k += 1;
        }
        out.push(members);
    }
    out
}

/// Finds an `(n−1)×(n−1)` lattice of corners in a cluster.
fn lattice_board(corners: &[Corner], members: &[usize], params: &ChessboardParams) -> Option<Chessboard> {
    let side = params.squares.checked_sub(1)?;
    if members.len() < side * side || side < 2 {
        return None;
    }
    let pts: Vec<Point2> = members.iter().map(|&i| corners[i].p).collect();
    let c = centroid(&pts);
    let origin_k = (0..pts.len()).min_by(|&a, &b| pts[a].dist(c).total_cmp(&pts[b].dist(c)))?;
    let o = pts[origin_k];
    let mut others: Vec<Point2> = pts.iter().filter(|p| **p != o).map(|p| *p - o).collect();
    others.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mut u = *others.first()?;
    let mut v = *others
        .iter()
        .find(|d| (d.cross(u) / (d.norm() * u.norm())).abs() > 0.7)?;
    if u.x.abs() < u.y.abs() {
        std::mem::swap(&mut u, &mut v);
    }
    if u.x < 0.0 {
        u = u * -1.0;
    }
    if v.y < 0.0 {
        v = v * -1.0;
    }
    if u.norm() < params.min_spacing || v.norm() < params.min_spacing {
        return None;
    }
    let det = u.cross(v);
    let mut cells: Vec<(i64, i64, usize)> = Vec::new();
    for (k, p) in pts.iter().enumerate() {
        let d = *p - o;
        let a = d.cross(v) / det;
        let b = u.cross(d) / det;
        let (ia, ib) = (a.round(), b.round());
        if (a - ia).abs() < 0.2 && (b - ib).abs() < 0.2 {
            cells.push((ia as i64, ib as i64, members[k]));
        }
    }
    // Best-scoring full window of lattice positions.
    let side_i = side as i64;
    let mut best: Option<(f64, Vec<(i64, i64, usize)>)> = None;
    let (amin, amax) = (cells.iter().map(|c| c.0).min()?, cells.iter().map(|c| c.0).max()?);
    let (bmin, bmax) = (cells.iter().map(|c| c.1).min()?, cells.iter().map(|c| c.1).max()?);
    for a0 in amin..=amax - side_i + 1 {
        for b0 in bmin..=bmax - side_i + 1 {
            let mut window = Vec::new();
            for b in b0..b0 + side_i {
                for a in a0..a0 + side_i {
                    let hit = cells.iter().filter(|c| c.0 == a && c.1 == b).max_by(|x, y| {
                        corners[x.2].response.total_cmp(&corners[y.2].response)
                    });
                    if let Some(&h) = hit {
                        window.push(h);
                    }
                }
            }
            if window.len() != side * side {
                continue;
            }
            let score: f64 = window.iter().map(|c| corners[c.2].response).sum();
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, window));
            }
        }
    }
    let (_, window) = best?;
    let at = |a: i64, b: i64| corners[window.iter().find(|c| c.0 == a && c.1 == b).expect("full window").2].p;
    let (a0, b0) = (window[0].0, window[0].1);
    let mut dx = Vec::new();
    let mut dy = Vec::new();
    for b in b0..b0 + side_i {
        for a in a0..a0 + side_i {
            if a + 1 < a0 + side_i {
                dx.push((at(a + 1, b).x - at(a, b).x).abs());
            }
            if b + 1 < b0 + side_i {
                dy.push((at(a, b + 1).y - at(a, b).y).abs());
            }
        }
    }
    let corners_out: Vec<Point2> = window.iter().map(|c| corners[c.2].p).collect();
    Some(Chessboard {
        center: centroid(&corners_out),
        corners: corners_out,
        square_width: crate::vision::median(&dx)?,
        square_height: crate::vision::median(&dy)?,
    })
}

/// Detects the four plate-corner chessboards, ordered top-left, top-right,
/// bottom-left, bottom-right.
pub fn detect_chessboards(gray: &GrayImage, params: &ChessboardParams) -> Result<Vec<Chessboard>> {
    let corners = saddle_corners(gray, params);
    let boards: Vec<Chessboard> = clusters(&corners, params.link_distance)
        .iter()
        .filter_map(|m| lattice_board(&corners, m, params))
        .collect();
    let (w, h) = (gray.width as f64, gray.height as f64);
    let plate_corners = [
        Point2::new(0.0, 0.0),
        Point2::new(w, 0.0),
        Point2::new(0.0, h),
        Point2::new(w, h),
    ];
    let mid = Point2::new(w / 2.0, h / 2.0);
    let mut out = Vec::new();
    for (q, pc) in plate_corners.iter().enumerate() {
        let in_quadrant = |b: &&Chessboard| {
            let right = b.center.x > mid.x;
            let below = b.center.y > mid.y;
            (right, below) == (q % 2 == 1, q >= 2)
        };
        match boards
            .iter()
            .filter(in_quadrant)
            .min_by(|a, b| a.center.dist(*pc).total_cmp(&b.center.dist(*pc)))
        {
            Some(b) => out.push(b.clone()),
            None => return Err(Error::ChessboardCount { found: boards.len() }),
        }
    }
    Ok(out)
}

/// Squeezes the plate horizontally by `mean(height) / mean(width)` of the
/// board squares and maps the boards into the new frame.
pub fn size_correct(plate: &PlateImage, boards: &[Chessboard]) -> Result<(PlateImage, Vec<Chessboard>)> {
    if boards.is_empty() {
        return Err(Error::ChessboardCount { found: 0 });
    }
    let n = boards.len() as f64;
    let w = boards.iter().map(|b| b.square_width).sum::<f64>() / n;
    let h = boards.iter().map(|b| b.square_height).sum::<f64>() / n;
    let factor = h / w;
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::InvalidGeometry(format!(
            "size correction factor {factor:.4} would enlarge the image (square {w:.3} × {h:.3})"
        )));
    }
    let cube = bilinear_resize_horizontal(&plate.cube, factor)?;
    let step = HorizontalResize::new(plate.cube.width, factor)?;
    let resize = HorizontalResize {
        src_width: plate.resize.src_width,
        dst_width: step.dst_width,
    };
    let scale = step.dst_width as f64 / step.src_width as f64;
    let moved = boards
        .iter()
        .map(|b| {
            let corners: Vec<Point2> = b.corners.iter().map(|p| Point2::new(step.to_dst_x(p.x), p.y)).collect();
            Chessboard {
                center: centroid(&corners),
                corners,
                square_width: b.square_width * scale,
                square_height: b.square_height,
            }
        })
        .collect();
    Ok((
        PlateImage {
            cube,
            crop_origin: plate.crop_origin,
            size_factor: plate.size_factor * scale,
            resize,
        },
        moved,
    ))
}

/// Output of the full standardization chain.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub plate: PlateImage,
    /// Boards in the final plate frame (top-left, top-right, bottom-left,
    /// bottom-right).
    pub boards: Vec<Chessboard>,
    pub references: RowReferences,
}

/// locate references → row references → correction → boards → size correction.
pub fn standardize(raw: &ImageCube, dark: Option<&ImageCube>, params: &StandardizeParams) -> Result<Standardized> {
    if raw.modality == Modality::Hsi && dark.is_none() {
        return Err(Error::Invalid("HSI frames need a dark frame".into()));
    }
    let refs_loc = locate_white_references(raw, params.otsu_bins)?;
    let references = build_row_references(raw, &refs_loc.mask, dark, params.white_quantile)?;
    let plate = correct_intensity(raw, &references, refs_loc.rows, refs_loc.cols, params.clamp)?;
    let boards = detect_chessboards(&plate.gray(), &params.chessboard)?;
    let (plate, boards) = size_correct(&plate, &boards)?;
    Ok(Standardized {
        plate,
        boards,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthscene::{render_reference, render_session, SceneSpec};
    use crate::Affine2D;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn correction_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..500.0) };
            let w = d + rng.random_range(1.0..3000.0);
            assert!((correct_value(w, w, d) - 1.0).abs() < 1e-9);
            assert!(correct_value(d, w, d).abs() < 1e-9);
            assert!((correct_value((w + d) / 2.0, w, d) - 0.5).abs() < 1e-9);
        }
    }

    fn strip_frame(rows: usize, cols: usize, strip: f32) -> (ImageCube, BinaryMask) {
        let mut cube = ImageCube::zeros(rows, cols, 3, 8, Modality::Rgb);
        let mask = BinaryMask::from_fn(rows, cols, |_, c| c < 3 || c >= cols - 3);
        for r in 0..rows {
            for c in 0..cols {
                let v = if mask.get(r, c) { strip } else { 40.0 };
                cube.pixel_mut(r, c).fill(v);
            }
        }
        (cube, mask)
    }

    #[test]
    fn constant_strip_gives_constant_references() {
        let (cube, mask) = strip_frame(6, 20, 200.0);
        let refs = build_row_references(&cube, &mask, None, 0.75).unwrap();
        assert_eq!(refs.rows, (0..6).collect::<Vec<_>>());
        assert!(refs.white.iter().flatten().all(|&v| v == 200.0));
        assert!(refs.dark.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn white_not_above_dark_is_reported() {
        let (cube, mask) = strip_frame(4, 12, 100.0);
        let mut dark = ImageCube::zeros(4, 12, 3, 8, Modality::Rgb);
        dark.data.fill(120.0);
        match build_row_references(&cube, &mask, Some(&dark), 0.75) {
            Err(Error::InvalidReference { row: 0, channel: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_strips_are_an_error() {
        let mut cube = ImageCube::zeros(20, 20, 3, 8, Modality::Rgb);
        for r in 0..20 {
            for c in 0..20 {
                cube.pixel_mut(r, c).fill(if c < 10 { 10.0 } else { 200.0 });
            }
        }
        assert!(matches!(
            locate_white_references(&cube, 256),
            Err(Error::ReferenceNotFound(_))
        ));
    }

    #[test]
    fn synthetic_references_match_injected_gradient() {
        let spec = SceneSpec {
            noise: 0.0,
            optical_blur: 0.0,
            ..SceneSpec::random(4)
        };
        let r = render_reference(&spec);
        let loc = locate_white_references(&r.raw, 256).unwrap();
        assert_eq!(loc.rows, r.truth.strip_rows);
        let refs = build_row_references(&r.raw, &loc.mask, None, 0.75).unwrap();
        for (k, &row) in refs.rows.iter().enumerate() {
            for c in 0..3 {
                assert!((refs.white[k][c] - r.truth.row_white[row][c]).abs() < 1e-6);
            }
        }
        let s = render_session(&spec, 1, &Affine2D::identity());
        let loc = locate_white_references(&s.hsi.raw, 256).unwrap();
        let refs = build_row_references(&s.hsi.raw, &loc.mask, s.hsi.dark.as_ref(), 0.75).unwrap();
        let (top, bottom) = s.hsi.truth.strip_rows;
        assert!(refs.rows.first().unwrap() <= &top && refs.rows.last().unwrap() >= &bottom);
        for (k, &row) in refs.rows.iter().enumerate() {
            // Partly covered edge rows mix strip and belt.
            if row < top || row > bottom {
                continue;
            }
            for c in 0..spec.hsi_channels {
                assert!((refs.white[k][c] - s.hsi.truth.row_white[row][c]).abs() < 1e-6);
                assert!((refs.dark[k][c] - s.hsi.truth.row_dark[row][c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn speck_is_not_a_reference() {
        let spec = SceneSpec {
            noise: 0.0,
            decoy_circles: vec![(Point2::new(150.0, 375.0), 12.0)],
            ..SceneSpec::default()
        };
        let mut r = render_reference(&spec);
        // A tiny saturated dust speck on the plate.
        for dr in 0..3 {
            for dc in 0..3 {
                r.raw.pixel_mut(200 + dr, 300 + dc).fill(255.0);
            }
        }
        let loc = locate_white_references(&r.raw, 256).unwrap();
        assert!(!loc.mask.get(201, 301));
        let (h, w) = (r.raw.height, r.raw.width);
        let truth = BinaryMask::from_fn(h, w, |row, c| {
            let p = r.truth.raw_to_world().apply(Point2::new(c as f64, row as f64));
            p.y >= 0.0 && p.y < spec.plate_height && (p.x < spec.strip_width || p.x >= spec.plate_width - spec.strip_width) && p.x >= 0.0 && p.x < spec.plate_width
        });
        assert!(loc.mask.iou(&truth) >= 0.98);
    }

    #[test]
    fn boards_and_size_factor_on_synthetic_plate() {
        for seed in [1, 2, 3] {
            let spec = SceneSpec::random(seed);
            let r = render_reference(&spec);
            let st = standardize(&r.raw, None, &StandardizeParams::default()).unwrap();
            assert!((st.plate.size_factor - 1.0 / spec.stretch).abs() / (1.0 / spec.stretch) < 0.01);
            for (b, t) in st.boards.iter().zip(&r.truth.boards) {
                let expected = st.plate.raw_to_plate(t.center_raw);
                assert!(b.center.dist(expected) < 1.5, "seed {seed}: {:?} vs {expected:?}", b.center);
                let ratio = b.square_width / b.square_height;
                assert!((0.99..=1.01).contains(&ratio), "seed {seed}: ratio {ratio}");
            }
            // Running detection again on the corrected plate finds nothing left to squeeze.
            let again = detect_chessboards(&st.plate.gray(), &ChessboardParams::default()).unwrap();
            let w: f64 = again.iter().map(|b| b.square_width).sum();
            let h: f64 = again.iter().map(|b| b.square_height).sum();
            assert!((0.99..=1.01).contains(&(h / w)));
        }
    }

    #[test]
    fn unit_factor_for_square_boards() {
        let plate = PlateImage {
            cube: ImageCube {
                reflectance: true,
                data: vec![0.4; 10 * 12 * 3],
                ..ImageCube::zeros(10, 12, 3, 8, Modality::Rgb)
            },
            crop_origin: (2, 3),
            size_factor: 1.0,
            resize: HorizontalResize::identity(12),
        };
        let b = Chessboard {
            corners: vec![Point2::new(5.0, 5.0)],
            center: Point2::new(5.0, 5.0),
            square_width: 12.0,
            square_height: 12.0,
        };
        let (out, boards) = size_correct(&plate, &[b.clone()]).unwrap();
        assert_eq!(out.cube, plate.cube);
        assert_eq!(boards[0], b);
        let wide = Chessboard {
            square_width: 10.0,
            ..b
        };
        assert!(matches!(size_correct(&plate, &[wide]), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn plate_mapping_round_trips() {
        let plate = PlateImage {
            cube: ImageCube::zeros(2, 2, 1, 8, Modality::Rgb),
            crop_origin: (13, 17),
            size_factor: 0.75,
            resize: HorizontalResize {
                src_width: 400,
                dst_width: 300,
            },
        };
        let p = Point2::new(123.4, 56.7);
        assert!(plate.plate_to_raw(plate.raw_to_plate(p)).dist(p) < 1e-9);
    }
}
