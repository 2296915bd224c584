//! Carrying a reference grid into later sessions and cutting out cells.
//!
//! RGB frames are registered through the marker corners, which move with the
//! dish. HSI frames of the same session are registered to the RGB frame
//! through the plate's chessboards, since the dish does not move relative to
//! the plate within a session.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fiducial::MarkerDetection;
use crate::geometry::{signed_area, Affine2D, Point2};
use crate::gridfind::GridModel;
use crate::pixcodec::{read_cube, write_cube, ImageCube, Modality};
use crate::vision::{estimate_affine_ransac, BinaryMask, Circle, RansacParams};
use crate::{Error, Result};

/// Maps every dish-attached feature of `grid` through `t`. The chessboard
/// centers are plate-attached and are left to the caller.
fn transform_grid(grid: &GridModel, t: &Affine2D) -> GridModel {
    GridModel {
        dish_id: grid.dish_id.clone(),
        lines: grid.lines,
        points: t.apply_all(&grid.points),
        markers: grid
            .markers
            .iter()
            .map(|m| MarkerDetection {
                id: m.id,
                corners: m.corners.map(|p| t.apply(p)),
            })
            .collect(),
        chessboard_centers: grid.chessboard_centers.clone(),
        dish_circle: Circle {
            center: t.apply(grid.dish_circle.center),
            radius: grid.dish_circle.radius * t.det().abs().sqrt(),
            votes: grid.dish_circle.votes,
        },
    }
}

/// Result of a localization: the moved grid and the transform used.
#[derive(Debug, Clone, PartialEq)]
pub struct Localized {
    pub grid: GridModel,
    pub transform: Affine2D,
    /// Indices of the correspondences the fit kept.
    pub inliers: Vec<usize>,
}

/// Registers `reference` to the markers found on the current plate. Corners
/// are matched by marker id and corner order; the current plate's boards
/// replace the reference's.
pub fn localize_rgb(
    reference: &GridModel,
    current_markers: &[MarkerDetection],
    current_boards: &[Point2],
    ransac: &RansacParams,
) -> Result<Localized> {
    let mut src = Vec::with_capacity(8);
    let mut dst = Vec::with_capacity(8);
    for m in &reference.markers {
        let cur = current_markers
            .iter()
            .find(|c| c.id == m.id)
            .ok_or_else(|| Error::Tracking(format!("marker {} not found on the current plate", m.id)))?;
        src.extend_from_slice(&m.corners);
        dst.extend_from_slice(&cur.corners);
    }
    let fit = estimate_affine_ransac(&src, &dst, ransac)?;
    let mut grid = transform_grid(reference, &fit.transform);
    grid.chessboard_centers = current_boards.to_vec();
    Ok(Localized {
        grid,
        transform: fit.transform,
        inliers: fit.inliers,
    })
}

/// Orders four board centers top-left, top-right, bottom-left, bottom-right
/// by their quadrant around the centers' centroid.
pub fn sort_boards_by_quadrant(centers: &[Point2]) -> Result<[Point2; 4]> {
    if centers.len() != 4 {
        return Err(Error::ChessboardCount { found: centers.len() });
    }
    let c = crate::geometry::centroid(centers);
    let mut out = [None; 4];
    for &p in centers {
        let q = usize::from(p.x > c.x) + 2 * usize::from(p.y > c.y);
        if out[q].replace(p).is_some() {
            return Err(Error::Tracking("two chessboards fall in the same quadrant".into()));
        }
    }
    Ok(out.map(|p| p.expect("four boards in four quadrants")))
}

/// Registers an RGB-frame grid to the HSI frame of the same session via the
/// four board centers.
pub fn localize_hsi(
    rgb_grid: &GridModel,
    rgb_boards: &[Point2],
    hsi_boards: &[Point2],
    ransac: &RansacParams,
) -> Result<Localized> {
    let src = sort_boards_by_quadrant(rgb_boards)?;
    let dst = sort_boards_by_quadrant(hsi_boards)?;
    let fit = estimate_affine_ransac(&src, &dst, ransac)?;
    let mut grid = transform_grid(rgb_grid, &fit.transform);
    grid.chessboard_centers = dst.to_vec();
    Ok(Localized {
        grid,
        transform: fit.transform,
        inliers: fit.inliers,
    })
}

/// Provenance of a cell cutout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub dish_id: String,
    pub day: u32,
    pub modality: Modality,
    pub cell: (usize, usize),
    /// Cell polygon in plate coordinates, `(i,j)`, `(i+1,j)`, `(i+1,j+1)`,
    /// `(i,j+1)`.
    pub polygon: [Point2; 4],
    /// `(row, col)` of the crop's top-left pixel in the plate.
    pub offset: (usize, usize),
}

/// Circumscribed rectangle of a cell with pixels outside the polygon zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellImage {
    pub info: CellInfo,
    pub cube: ImageCube,
    /// Pixels whose centers lie inside or on the polygon.
    pub mask: BinaryMask,
}

impl CellImage {
    /// Writes `<stem>.cube.json` (+ payload) and `<stem>.cell.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        write_cube(&self.cube, &dir.join(format!("{stem}.cube.json")))?;
        let path = dir.join(format!("{stem}.cell.json"));
        let text = serde_json::to_string_pretty(&self.info).map_err(|e| Error::json(&path, e))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let path = dir.join(format!("{stem}.cell.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let info: CellInfo = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let cube = read_cube(&dir.join(format!("{stem}.cube.json")))?;
        let mask = polygon_mask(&info.polygon, info.offset, cube.height, cube.width);
        Ok(Self { info, cube, mask })
    }
}

fn inside_or_on(poly: &[Point2; 4], p: Point2) -> bool {
    let orient = signed_area(poly).signum();
    (0..4).all(|i| (poly[(i + 1) % 4] - poly[i]).cross(p - poly[i]) * orient >= -1e-9)
}

fn polygon_mask(poly: &[Point2; 4], offset: (usize, usize), height: usize, width: usize) -> BinaryMask {
    BinaryMask::from_fn(height, width, |r, c| {
        inside_or_on(poly, Point2::new((c + offset.1) as f64, (r + offset.0) as f64))
    })
}

pub fn extract_cell(plate: &ImageCube, grid: &GridModel, cell: (usize, usize), day: u32) -> Result<CellImage> {
    let n = grid.lines.saturating_sub(1);
    let (i, j) = cell;
    if i >= n || j >= n {
        return Err(Error::InvalidGeometry(format!("cell ({i},{j}) outside a {n}×{n} grid")));
    }
    let polygon = [grid.point(i, j), grid.point(i + 1, j), grid.point(i + 1, j + 1), grid.point(i, j + 1)];
    let area = signed_area(&polygon).abs();
    if !(area >= 25.0) {
        return Err(Error::InvalidGeometry(format!("cell ({i},{j}) polygon area {area:.1} px² is degenerate")));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &polygon {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0);
    let (c0, c1) = (clamp(x0.ceil(), plate.width) as usize, clamp(x1.floor(), plate.width) as usize);
    let (r0, r1) = (clamp(y0.ceil(), plate.height) as usize, clamp(y1.floor(), plate.height) as usize);
    if c1 < c0 || r1 < r0 {
        return Err(Error::InvalidGeometry(format!("cell ({i},{j}) lies outside the plate")));
    }
    let mut cube = plate.crop(r0..r1 + 1, c0..c1 + 1)?;
    let mask = polygon_mask(&polygon, (r0, c0), cube.height, cube.width);
    for r in 0..cube.height {
        for c in 0..cube.width {
            if !mask.get(r, c) {
                cube.pixel_mut(r, c).fill(0.0);
            }
        }
    }
    Ok(CellImage {
        info: CellInfo {
            dish_id: grid.dish_id.clone(),
            day,
            modality: plate.modality,
            cell,
            polygon,
            offset: (r0, c0),
        },
        cube,
        mask,
    })
}

/// All cells, row-major by `(i, j)` with `i` along x.
pub fn extract_all_cells(plate: &ImageCube, grid: &GridModel, day: u32) -> Result<Vec<CellImage>> {
    let n = grid.lines.saturating_sub(1);
    if n == 0 || grid.points.len() != grid.lines * grid.lines {
        return Err(Error::InvalidGeometry("grid has no cells".into()));
    }
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push(extract_cell(plate, grid, (i, j), day)?);
        }
    }
    Ok(out)
}
