//! Session manifests and the output layout derived from them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixcodec::Modality;

/// Days with imaging sessions; day 0 is before the kernels are moistened.
pub const SESSION_DAYS: std::ops::RangeInclusive<u32> = 0..=5;
/// Days that can carry a germination label.
pub const LABEL_DAYS: std::ops::RangeInclusive<u32> = 1..=5;
pub const CELLS_PER_SIDE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayEntry {
    pub day: u32,
    pub rgb_frame: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hsi_frame: Option<PathBuf>,
    /// Shutter-closed frame of the HSI camera.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dark_frame: Option<PathBuf>,
    /// Precomputed RGB day grid; skips RGB localization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
    /// Marker corners (plate coordinates) used instead of detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markers_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub dish_id: String,
    pub variety: String,
    /// RGB frame of the dish on white paper, used once for grid detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_frame: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_markers_file: Option<PathBuf>,
    /// Precomputed reference grid; skips detection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<PathBuf>,
    pub days: Vec<DayEntry>,
    /// `"i,j"` → day → germinated.
    #[serde(default)]
    pub germination: BTreeMap<String, BTreeMap<u32, bool>>,
}

pub fn cell_key(cell: (usize, usize)) -> String {
    format!("{},{}", cell.0, cell.1)
}

pub fn parse_cell_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::Invalid(format!("cell key `{key}` is not `i,j` with 0 <= i,j < {CELLS_PER_SIDE}"));
    let (i, j) = key.split_once(',').ok_or_else(bad)?;
    let i: usize = i.trim().parse().map_err(|_| bad())?;
    let j: usize = j.trim().parse().map_err(|_| bad())?;
    if i >= CELLS_PER_SIDE || j >= CELLS_PER_SIDE {
        return Err(bad());
    }
    Ok((i, j))
}

/// First labelled day on which the kernel had germinated.
pub fn germination_day(labels: &BTreeMap<u32, bool>) -> Option<u32> {
    labels.iter().find(|(_, &g)| g).map(|(&d, _)| d)
}

impl SessionManifest {
    pub fn day(&self, day: u32) -> Option<&DayEntry> {
        self.days.iter().find(|d| d.day == day)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("dish `{}`: {msg}", self.dish_id)));
        if !is_safe_name(&self.dish_id) {
            return bad("dish ids may only use letters, digits, `-`, `_` and `.`".into());
        }
        if self.reference_frame.is_none() && self.grid_file.is_none() {
            return bad("needs a reference_frame or a grid_file".into());
        }
        if self.days.is_empty() {
            return bad("no sessions".into());
        }
        let mut seen = BTreeSet::new();
        for d in &self.days {
            if !SESSION_DAYS.contains(&d.day) {
                return bad(format!("day {} outside 0..=5", d.day));
            }
            if !seen.insert(d.day) {
                return bad(format!("day {} listed twice", d.day));
            }
            if d.hsi_frame.is_some() && d.dark_frame.is_none() {
                return bad(format!("day {} has an HSI frame without a dark frame", d.day));
            }
        }
        for (key, labels) in &self.germination {
            if let Err(e) = parse_cell_key(key) {
                return bad(e.to_string());
            }
            let mut germinated = false;
            for (&day, &g) in labels {
                if !LABEL_DAYS.contains(&day) {
                    return bad(format!("cell {key}: label day {day} outside 1..=5"));
                }
                if germinated && !g {
                    return bad(format!("cell {key}: germination label reverts on day {day}"));
                }
                germinated |= g;
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.reference_frame, &mut self.reference_markers_file, &mut self.grid_file]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for d in &mut self.days {
            fix(&mut d.rgb_frame);
            for p in [&mut d.hsi_frame, &mut d.dark_frame, &mut d.grid_file, &mut d.markers_file]
                .into_iter()
                .flatten()
            {
                fix(p);
            }
        }
    }
}

fn is_safe_name(s: &str) -> bool {
    !s.is_empty()
        && s != "."
        && s != ".."
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// All dishes of a run. Relative paths are relative to the manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub dishes: Vec<SessionManifest>,
}

impl RunManifest {
    /// Parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut m.dishes {
            d.resolve_paths(base);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for d in &self.dishes {
            d.validate()?;
            if !ids.insert(d.dish_id.as_str()) {
                return Err(Error::Invalid(format!("dish `{}` listed twice", d.dish_id)));
            }
        }
        Ok(())
    }
}

/// Where `run` puts everything; a pure function of dish id, day, modality
/// and cell.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn dish(&self, dish: &str) -> PathBuf {
        self.root.join(dish)
    }

    pub fn reference_grid(&self, dish: &str) -> PathBuf {
        self.dish(dish).join("grid.json")
    }

    pub fn labels(&self, dish: &str) -> PathBuf {
        self.dish(dish).join("labels.csv")
    }

    pub fn dish_error(&self, dish: &str) -> PathBuf {
        self.dish(dish).join("error.json")
    }

    pub fn day(&self, dish: &str, day: u32) -> PathBuf {
        self.dish(dish).join(format!("day{day}"))
    }

    pub fn day_grid(&self, dish: &str, day: u32, modality: Modality) -> PathBuf {
        self.day(dish, day).join(format!("{}_grid.json", modality.as_str()))
    }

    pub fn cells(&self, dish: &str, day: u32, modality: Modality) -> PathBuf {
        self.day(dish, day).join(modality.as_str())
    }
}

pub fn cell_stem(cell: (usize, usize)) -> String {
    format!("cell_{}_{}", cell.0, cell.1)
}

pub fn mask_file(stem: &str) -> String {
    format!("{stem}.mask.pbm")
}

/// Spectrum stem for a cell stem: `cell_i_j` → `spectrum_i_j`.
pub fn spectrum_stem(cell_stem: &str) -> String {
    cell_stem.replacen("cell_", "spectrum_", 1)
}
