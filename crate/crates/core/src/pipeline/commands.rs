//! One function per pipeline stage, each reading and writing files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::{cell_stem, mask_file, spectrum_stem};
use crate::error::{Error, Result};
use crate::fiducial::{find_markers, load_marker_file, MarkerDetection};
use crate::geometry::{Affine2D, Point2};
use crate::gridfind::{detect_grid_with_markers, GridModel};
use crate::gridtrack::{extract_all_cells, localize_hsi, localize_rgb, CellImage, Localized};
use crate::kernelproc::{mean_pseudo_absorbance, segment_cell};
use crate::pixcodec::{read_cube, ImageCube, Modality};
use crate::standardize::{standardize, Standardized};
use crate::vision::BinaryMask;

pub fn standardize_frame(frame: &Path, dark: Option<&Path>, cfg: &PipelineConfig) -> Result<Standardized> {
    let raw = read_cube(frame)?;
    let dark = dark.map(read_cube).transpose()?;
    standardize(&raw, dark.as_ref(), &cfg.standardize)
}

pub fn board_centers(s: &Standardized) -> Vec<Point2> {
    s.boards.iter().map(|b| b.center).collect()
}

/// Grid on a standardized reference plate. Markers come from `markers` when
/// given, otherwise from detection.
pub fn detect_reference_grid(
    reference: &Standardized,
    markers: Option<Vec<MarkerDetection>>,
    dish_id: &str,
    cfg: &PipelineConfig,
) -> Result<GridModel> {
    let cube = &reference.plate.cube;
    let markers = markers.unwrap_or_else(|| find_markers(cube, &cfg.grid.markers));
    let mut grid = detect_grid_with_markers(cube, markers, &board_centers(reference), &cfg.grid)?;
    grid.dish_id = dish_id.to_string();
    Ok(grid)
}

/// Writes `grid.json` and `config.json` into `out`.
pub fn cmd_detect_grid(
    reference: &Path,
    dark: Option<&Path>,
    markers_file: Option<&Path>,
    dish_id: &str,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<GridModel> {
    let plate = standardize_frame(reference, dark, cfg)?;
    let markers = markers_file.map(load_marker_file).transpose()?;
    let grid = detect_reference_grid(&plate, markers, dish_id, cfg)?;
    cfg.dump(out)?;
    grid.save(&out.join("grid.json"))?;
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub transform: Affine2D,
    pub correspondences: usize,
    pub inliers: Vec<usize>,
}

impl FitRecord {
    fn new(l: &Localized, correspondences: usize) -> Self {
        Self {
            transform: l.transform,
            correspondences,
            inliers: l.inliers.clone(),
        }
    }
}

/// Transforms behind one session's day grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizeRecord {
    pub dish_id: String,
    pub day: u32,
    /// Absent when the RGB day grid was supplied instead of fitted.
    pub rgb: Option<FitRecord>,
    pub hsi: Option<FitRecord>,
}

#[derive(Debug, Clone)]
pub struct DayGrids {
    pub rgb: GridModel,
    pub hsi: Option<GridModel>,
    pub record: LocalizeRecord,
}

/// Moves the reference grid onto one session. `rgb_grid` short-cuts the RGB
/// fit; `markers` replaces RGB marker detection.
pub fn localize_session(
    reference: &GridModel,
    day: u32,
    rgb: &Standardized,
    rgb_grid: Option<GridModel>,
    markers: Option<Vec<MarkerDetection>>,
    hsi: Option<&Standardized>,
    cfg: &PipelineConfig,
) -> Result<DayGrids> {
    let rgb_boards = board_centers(rgb);
    let (rgb_grid, rgb_fit) = match rgb_grid {
        Some(g) => (g, None),
        None => {
            let markers = markers.unwrap_or_else(|| find_markers(&rgb.plate.cube, &cfg.grid.markers));
            let l = localize_rgb(reference, &markers, &rgb_boards, &cfg.ransac)?;
            let fit = FitRecord::new(&l, 4 * reference.markers.len());
            (l.grid, Some(fit))
        }
    };
    let (hsi_grid, hsi_fit) = match hsi {
        Some(h) => {
            let l = localize_hsi(&rgb_grid, &rgb_boards, &board_centers(h), &cfg.ransac)?;
            let fit = FitRecord::new(&l, 4);
            (Some(l.grid), Some(fit))
        }
        None => (None, None),
    };
    Ok(DayGrids {
        rgb: rgb_grid,
        hsi: hsi_grid,
        record: LocalizeRecord {
            dish_id: reference.dish_id.clone(),
            day,
            rgb: rgb_fit,
            hsi: hsi_fit,
        },
    })
}

impl DayGrids {
    /// `rgb_grid.json`, `hsi_grid.json` (when present) and `localize.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.rgb.save(&dir.join("rgb_grid.json"))?;
        if let Some(h) = &self.hsi {
            h.save(&dir.join("hsi_grid.json"))?;
        }
        write_json(&dir.join("localize.json"), &self.record)
    }
}

pub struct SessionFrames<'a> {
    pub rgb: &'a Path,
    /// HSI frame with its dark frame.
    pub hsi: Option<(&'a Path, &'a Path)>,
    pub markers_file: Option<&'a Path>,
}

pub fn cmd_localize(
    grid: &Path,
    day: u32,
    frames: &SessionFrames,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<DayGrids> {
    let reference = GridModel::load(grid)?;
    let rgb = standardize_frame(frames.rgb, None, cfg)?;
    let hsi = frames
        .hsi
        .map(|(h, d)| standardize_frame(h, Some(d), cfg))
        .transpose()?;
    let markers = frames.markers_file.map(load_marker_file).transpose()?;
    let grids = localize_session(&reference, day, &rgb, None, markers, hsi.as_ref(), cfg)?;
    cfg.dump(out)?;
    grids.save(out)?;
    Ok(grids)
}

/// Cuts the 25 cells out of a standardized plate into `dir`; returns the
/// stems written.
pub fn save_cells(plate: &ImageCube, grid: &GridModel, day: u32, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cells = extract_all_cells(plate, grid, day)?;
    let mut stems = Vec::with_capacity(cells.len());
    for c in &cells {
        let stem = cell_stem(c.info.cell);
        c.save(dir, &stem)?;
        stems.push(stem);
    }
    Ok(stems)
}

pub fn cmd_extract(
    grid: &Path,
    frame: &Path,
    dark: Option<&Path>,
    day: u32,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<Vec<String>> {
    let grid = GridModel::load(grid)?;
    let plate = standardize_frame(frame, dark, cfg)?;
    cfg.dump(out)?;
    save_cells(&plate.plate.cube, &grid, day, out)
}

/// Plain PBM (P1); 1 marks kernel pixels.
pub fn write_mask_pbm(path: &Path, mask: &BinaryMask) -> Result<()> {
    let mut s = format!("P1\n{} {}\n", mask.width, mask.height);
    for r in 0..mask.height {
        for c in 0..mask.width {
            s.push(if mask.get(r, c) { '1' } else { '0' });
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_mask_pbm(path: &Path) -> Result<BinaryMask> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    let body: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let mut tokens = body.split_whitespace();
    if tokens.next() != Some("P1") {
        return Err(bad("not a plain PBM (P1)"));
    }
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("bad dimensions"))
    };
    let (width, height) = (dim()?, dim()?);
    let bits: Vec<bool> = body
        .split_whitespace()
        .skip(3)
        .flat_map(str::chars)
        .map(|ch| match ch {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(bad("pixel values must be 0 or 1")),
        })
        .collect::<Result<_>>()?;
    if bits.len() != width * height {
        return Err(bad(&format!("{} pixels for a {width}×{height} mask", bits.len())));
    }
    Ok(BinaryMask { height, width, bits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Kernel,
    /// Nothing separable from the background.
    Empty,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub stem: String,
    pub status: CellStatus,
    pub kernel_pixels: usize,
    pub spectrum: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStages {
    Segment,
    Spectra,
    Both,
}

/// Segments and/or computes spectra for cells in `dir`. With
/// [`CellStages::Spectra`] an existing mask file is reused. Spectra are only
/// produced for HSI cells.
pub fn process_cells(dir: &Path, stems: &[String], stages: CellStages, cfg: &PipelineConfig) -> Vec<CellOutcome> {
    stems
        .iter()
        .map(|stem| match process_cell(dir, stem, stages, cfg) {
            Ok(o) => o,
            Err(Error::EmptyMask) => CellOutcome {
                stem: stem.clone(),
                status: CellStatus::Empty,
                kernel_pixels: 0,
                spectrum: false,
                error: None,
            },
            Err(e) => CellOutcome {
                stem: stem.clone(),
                status: CellStatus::Failed,
                kernel_pixels: 0,
                spectrum: false,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

fn process_cell(dir: &Path, stem: &str, stages: CellStages, cfg: &PipelineConfig) -> Result<CellOutcome> {
    let cell = CellImage::load(dir, stem)?;
    let mask_path = dir.join(mask_file(stem));
    let mask = if stages == CellStages::Spectra && mask_path.exists() {
        read_mask_pbm(&mask_path)?
    } else {
        let m = segment_cell(&cell, cfg.spectrum.otsu_bins)?;
        if stages != CellStages::Spectra {
            write_mask_pbm(&mask_path, &m)?;
        }
        m
    };
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let spectrum = stages != CellStages::Segment && cell.info.modality == Modality::Hsi;
    if spectrum {
        let s = mean_pseudo_absorbance(&cell.cube, &mask, &cfg.spectrum)?;
        s.save(dir, &spectrum_stem(stem), &cell.info.dish_id, cell.info.day, cell.info.cell)?;
    }
    Ok(CellOutcome {
        stem: stem.to_string(),
        status: CellStatus::Kernel,
        kernel_pixels: mask.count(),
        spectrum,
        error: None,
    })
}

/// Stems of every `<stem>.cell.json` in `dir`, sorted.
pub fn list_cells(dir: &Path) -> Result<Vec<String>> {
    let mut stems = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(stem) = entry.file_name().to_str().and_then(|n| n.strip_suffix(".cell.json")) {
            stems.push(stem.to_string());
        }
    }
    stems.sort();
    Ok(stems)
}

/// Masks and/or spectra for every cell file in `dir`, plus `cells.json`
/// summarizing the outcome per cell.
pub fn cmd_cells(dir: &Path, stages: CellStages, cfg: &PipelineConfig) -> Result<Vec<CellOutcome>> {
    let stems = list_cells(dir)?;
    if stems.is_empty() {
        return Err(Error::Invalid(format!("no cell files in {}", dir.display())));
    }
    let outcomes = process_cells(dir, &stems, stages, cfg);
    cfg.dump(dir)?;
    write_json(&dir.join("cells.json"), &outcomes)?;
    Ok(outcomes)
}

pub fn cmd_segment_spectra(dir: &Path, cfg: &PipelineConfig) -> Result<Vec<CellOutcome>> {
    cmd_cells(dir, CellStages::Both, cfg)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Raw sample layouts accepted by `convert`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawLayout {
    Mono12p,
    U16le,
    U8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawFrameInfo {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub bit_depth: u8,
    pub modality: Modality,
    pub layout: RawLayout,
}

/// Wraps a headerless vendor dump (`H × W × C`, channel fastest) as a cube.
pub fn read_raw_frame(path: &Path, info: &RawFrameInfo) -> Result<ImageCube> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = info.height * info.width * info.channels;
    let values: Vec<u16> = match info.layout {
        RawLayout::Mono12p => {
            let buf = crate::pixcodec::Mono12pBuffer::new(bytes, n)?;
            crate::pixcodec::unpack_mono12p(&buf)
        }
        RawLayout::U16le => crate::pixcodec::u16_from_le_bytes(&bytes)?,
        RawLayout::U8 => bytes.into_iter().map(u16::from).collect(),
    };
    if values.len() != n {
        return Err(Error::Format(format!(
            "{}: {} samples, expected {n}",
            path.display(),
            values.len()
        )));
    }
    ImageCube::from_data(
        info.height,
        info.width,
        info.channels,
        info.bit_depth,
        info.modality,
        values.into_iter().map(f32::from).collect(),
    )
}

/// Re-packs a cube container, or wraps a raw dump when `raw` is given.
pub fn cmd_convert(
    input: &Path,
    raw: Option<&RawFrameInfo>,
    output: &Path,
    packing: Option<crate::pixcodec::Packing>,
) -> Result<crate::pixcodec::CubeHeader> {
    let cube = match raw {
        Some(info) => read_raw_frame(input, info)?,
        None => read_cube(input)?,
    };
    let packing = packing.unwrap_or_else(|| crate::pixcodec::Packing::for_cube(&cube));
    crate::pixcodec::write_cube_with(&cube, output, packing)
}

/// One line per cell outcome, for human-readable summaries.
pub fn summarize_cells(outcomes: &[CellOutcome]) -> String {
    let mut s = String::new();
    for o in outcomes {
        let _ = write!(s, "{} {:?} {}", o.stem, o.status, o.kernel_pixels);
        if let Some(e) = &o.error {
            let _ = write!(s, " {e}");
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pbm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pbm");
        let mask = BinaryMask::from_fn(7, 13, |r, c| (r * 13 + c) % 3 == 0);
        write_mask_pbm(&path, &mask).unwrap();
        assert_eq!(read_mask_pbm(&path).unwrap(), mask);
        std::fs::write(&path, "P1\n# c\n3 2\n1 0 1\n0 1 0\n").unwrap();
        let m = read_mask_pbm(&path).unwrap();
        assert_eq!(m.bits, vec![true, false, true, false, true, false]);
        std::fs::write(&path, "P1\n3 2\n101\n01\n").unwrap();
        assert!(read_mask_pbm(&path).is_err());
    }

    #[test]
    fn raw_dump_converts() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("f.raw");
        let values: Vec<u16> = (0..24).map(|v| v * 170).collect();
        std::fs::write(&raw, crate::pixcodec::pack_mono12p(&values).unwrap().into_bytes()).unwrap();
        let info = RawFrameInfo {
            height: 2,
            width: 3,
            channels: 4,
            bit_depth: 12,
            modality: Modality::Hsi,
            layout: RawLayout::Mono12p,
        };
        let out = dir.path().join("f.cube.json");
        cmd_convert(&raw, Some(&info), &out, None).unwrap();
        let cube = read_cube(&out).unwrap();
        assert_eq!(cube.get(1, 2, 3), (23 * 170) as f32);
        let out16 = dir.path().join("g.cube.json");
        let h = cmd_convert(&out, None, &out16, Some(crate::pixcodec::Packing::U16)).unwrap();
        assert_eq!(h.packing, crate::pixcodec::Packing::U16);
        assert_eq!(read_cube(&out16).unwrap(), cube);
    }
}
