//! The whole chain over every dish of a manifest.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::commands::{
    detect_reference_grid, localize_session, process_cells, save_cells, standardize_frame, write_json, CellOutcome,
    CellStages, CellStatus,
};
use super::config::PipelineConfig;
use super::manifest::{germination_day, DayEntry, OutputLayout, RunManifest, SessionManifest, LABEL_DAYS};
use crate::error::{Error, Result};
use crate::fiducial::load_marker_file;
use crate::gridfind::GridModel;
use crate::pixcodec::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityReport {
    pub kernels: usize,
    pub spectra: usize,
    pub empty: Vec<String>,
    /// `stem: error`.
    pub failed: Vec<String>,
}

impl ModalityReport {
    fn from_outcomes(outcomes: &[CellOutcome]) -> Self {
        let of = |s: CellStatus| outcomes.iter().filter(move |o| o.status == s);
        Self {
            kernels: of(CellStatus::Kernel).count(),
            spectra: outcomes.iter().filter(|o| o.spectrum).count(),
            empty: of(CellStatus::Empty).map(|o| o.stem.clone()).collect(),
            failed: of(CellStatus::Failed)
                .map(|o| format!("{}: {}", o.stem, o.error.as_deref().unwrap_or("")))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub day: u32,
    pub rgb_inliers: Option<usize>,
    pub hsi_inliers: Option<usize>,
    pub rgb: ModalityReport,
    pub hsi: Option<ModalityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DishReport {
    pub dish_id: String,
    pub variety: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub days: Vec<DayReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub dishes: Vec<DishReport>,
}

impl RunReport {
    pub fn failed_dishes(&self) -> usize {
        self.dishes.iter().filter(|d| !d.ok).count()
    }

    pub fn failed_cells(&self) -> usize {
        self.dishes
            .iter()
            .flat_map(|d| &d.days)
            .map(|d| d.rgb.failed.len() + d.hsi.as_ref().map_or(0, |h| h.failed.len()))
            .sum()
    }

    /// Failed dishes plus failed cells.
    pub fn failures(&self) -> usize {
        self.failed_dishes() + self.failed_cells()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for d in &self.dishes {
            match &d.error {
                None => {
                    let kernels: usize = d.days.iter().map(|x| x.rgb.kernels).sum();
                    let spectra: usize = d.days.iter().filter_map(|x| x.hsi.as_ref()).map(|h| h.spectra).sum();
                    let _ = writeln!(s, "{}: ok, {} sessions, {kernels} kernel masks, {spectra} spectra", d.dish_id, d.days.len());
                }
                Some(e) => {
                    let _ = writeln!(s, "{}: FAILED: {e}", d.dish_id);
                }
            }
        }
        s
    }
}

/// Runs every dish on a pool of `cfg.workers` threads. A failing dish has
/// its output directory replaced by `error.json`; the others are unaffected.
pub fn cmd_run(manifest: &RunManifest, cfg: &PipelineConfig, out: &Path) -> Result<RunReport> {
    manifest.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cfg.dump(out)?;
    let layout = OutputLayout::new(out);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let dishes: Vec<DishReport> = pool.install(|| {
        manifest
            .dishes
            .par_iter()
            .map(|d| run_dish_isolated(d, cfg, &layout))
            .collect()
    });
    let report = RunReport { seed: cfg.seed, dishes };
    write_json(&layout.report(), &report)?;
    Ok(report)
}

pub fn cmd_run_file(manifest: &Path, cfg: &PipelineConfig, out: &Path) -> Result<RunReport> {
    cmd_run(&RunManifest::load(manifest)?, cfg, out)
}

fn run_dish_isolated(d: &SessionManifest, cfg: &PipelineConfig, layout: &OutputLayout) -> DishReport {
    let dir = layout.dish(&d.dish_id);
    let outcome = clear_dir(&dir).and_then(|_| run_dish(d, cfg, layout));
    match outcome {
        Ok(days) => DishReport {
            dish_id: d.dish_id.clone(),
            variety: d.variety.clone(),
            ok: true,
            error: None,
            days,
        },
        Err(e) => {
            log::warn!("dish {} failed: {e}", d.dish_id);
            let msg = e.to_string();
            let quarantine = clear_dir(&dir).and_then(|_| {
                write_json(
                    &layout.dish_error(&d.dish_id),
                    &serde_json::json!({ "dish_id": d.dish_id, "error": msg }),
                )
            });
            if let Err(q) = quarantine {
                log::error!("could not quarantine dish {}: {q}", d.dish_id);
            }
            DishReport {
                dish_id: d.dish_id.clone(),
                variety: d.variety.clone(),
                ok: false,
                error: Some(msg),
                days: Vec::new(),
            }
        }
    }
}

fn clear_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run_dish(d: &SessionManifest, cfg: &PipelineConfig, layout: &OutputLayout) -> Result<Vec<DayReport>> {
    let mut reference = match (&d.grid_file, &d.reference_frame) {
        (Some(g), _) => GridModel::load(g)?,
        (None, Some(frame)) => {
            let plate = standardize_frame(frame, None, cfg)?;
            let markers = d.reference_markers_file.as_deref().map(load_marker_file).transpose()?;
            detect_reference_grid(&plate, markers, &d.dish_id, cfg)?
        }
        (None, None) => return Err(Error::Invalid(format!("dish `{}` has no reference", d.dish_id))),
    };
    reference.dish_id = d.dish_id.clone();
    reference.save(&layout.reference_grid(&d.dish_id))?;
    write_labels(d, &layout.labels(&d.dish_id))?;

    let mut days: Vec<&DayEntry> = d.days.iter().collect();
    days.sort_by_key(|e| e.day);
    days.into_iter().map(|e| run_day(d, e, &reference, cfg, layout)).collect()
}

fn run_day(
    d: &SessionManifest,
    e: &DayEntry,
    reference: &GridModel,
    cfg: &PipelineConfig,
    layout: &OutputLayout,
) -> Result<DayReport> {
    let ctx = |err: Error| Error::Tracking(format!("day {}: {err}", e.day));
    let rgb = standardize_frame(&e.rgb_frame, None, cfg).map_err(ctx)?;
    let hsi = match (&e.hsi_frame, &e.dark_frame) {
        (Some(h), dark) => Some(standardize_frame(h, dark.as_deref(), cfg).map_err(ctx)?),
        (None, _) => None,
    };
    let rgb_grid = e.grid_file.as_deref().map(GridModel::load).transpose()?;
    let markers = e.markers_file.as_deref().map(load_marker_file).transpose()?;
    let grids = localize_session(reference, e.day, &rgb, rgb_grid, markers, hsi.as_ref(), cfg).map_err(ctx)?;
    grids.save(&layout.day(&d.dish_id, e.day))?;

    let cells = |plate: &crate::pixcodec::ImageCube, grid: &GridModel, m: Modality| -> Result<ModalityReport> {
        let dir = layout.cells(&d.dish_id, e.day, m);
        let stems = save_cells(plate, grid, e.day, &dir)?;
        let outcomes = process_cells(&dir, &stems, CellStages::Both, cfg);
        write_json(&dir.join("cells.json"), &outcomes)?;
        Ok(ModalityReport::from_outcomes(&outcomes))
    };
    let rgb_report = cells(&rgb.plate.cube, &grids.rgb, Modality::Rgb)?;
    let hsi_report = match (&hsi, &grids.hsi) {
        (Some(h), Some(g)) => Some(cells(&h.plate.cube, g, Modality::Hsi)?),
        _ => None,
    };
    Ok(DayReport {
        day: e.day,
        rgb_inliers: grids.record.rgb.as_ref().map(|f| f.inliers.len()),
        hsi_inliers: grids.record.hsi.as_ref().map(|f| f.inliers.len()),
        rgb: rgb_report,
        hsi: hsi_report,
    })
}

/// `cell,day1,...,day5,germination_day`; unlabelled entries are blank.
fn write_labels(d: &SessionManifest, path: &Path) -> Result<()> {
    let mut s = String::from("cell");
    for day in LABEL_DAYS {
        let _ = write!(s, ",day{day}");
    }
    s.push_str(",germination_day\n");
    for (cell, labels) in &d.germination {
        let _ = write!(s, "\"{cell}\"");
        for day in LABEL_DAYS {
            match labels.get(&day) {
                Some(&g) => {
                    let _ = write!(s, ",{}", u8::from(g));
                }
                None => s.push(','),
            }
        }
        match germination_day(labels) {
            Some(g) => {
                let _ = writeln!(s, ",{g}");
            }
            None => s.push_str(",\n"),
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
