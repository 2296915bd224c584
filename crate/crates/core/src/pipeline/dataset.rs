//! Count checks against a downloaded dataset archive.
//!
//! Everything that depends on how the archive is laid out lives in
//! [`parse_archive`]. The layout it reads is
//!
//! ```text
//! <root>/labels.csv                      variety,dish,kernel,germination_day
//! <root>/<variety>/<dish>/<kernel>/day<d>_rgb.<ext>
//! <root>/<variety>/<dish>/<kernel>/day<d>_hsi.<ext>
//! ```
//!
//! with an empty `germination_day` for kernels that never germinated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{LABEL_DAYS, SESSION_DAYS};
use crate::error::{Error, Result};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarietyCounts {
    pub kernels: usize,
    pub dishes: usize,
    /// Kernels first germinating on days 1..=5.
    pub germinated: [usize; 5],
    pub germinated_any: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetExpectation {
    pub varieties: BTreeMap<String, VarietyCounts>,
    pub total: VarietyCounts,
    /// Sessions per kernel and modality.
    pub sessions: usize,
}

impl DatasetExpectation {
    /// Counts published with the barley dataset.
    pub fn published() -> Self {
        let v = |kernels, dishes, germinated, germinated_any| VarietyCounts {
            kernels,
            dishes,
            germinated,
            germinated_any,
        };
        Self {
            varieties: BTreeMap::from([
                ("Prospect_0".to_string(), v(624, 25, [4, 29, 23, 15, 12], 83)),
                ("Prospect_1".to_string(), v(394, 16, [1, 0, 1, 0, 3], 5)),
                ("Laureate_0".to_string(), v(624, 25, [13, 21, 25, 15, 17], 91)),
                ("Laureate_1".to_string(), v(600, 24, [9, 43, 57, 58, 35], 202)),
            ]),
            total: v(2242, 90, [28, 93, 106, 88, 67], 382),
            sessions: 6,
        }
    }

    /// Where the per-variety rows do not add up to the totals or a row's
    /// days do not add up to its "any" count.
    pub fn inconsistencies(&self) -> Vec<String> {
        let mut out = Vec::new();
        let sum = |f: &dyn Fn(&VarietyCounts) -> usize| self.varieties.values().map(f).sum::<usize>();
        let mut check = |what: String, parts: usize, total: usize| {
            if parts != total {
                out.push(format!("{what}: varieties sum to {parts}, total says {total}"));
            }
        };
        check("kernels".into(), sum(&|v| v.kernels), self.total.kernels);
        check("dishes".into(), sum(&|v| v.dishes), self.total.dishes);
        for d in 0..5 {
            check(format!("germinated on day {}", d + 1), sum(&|v| v.germinated[d]), self.total.germinated[d]);
        }
        check("germinated on any day".into(), sum(&|v| v.germinated_any), self.total.germinated_any);
        for (name, v) in self.varieties.iter().chain([(&"total".to_string(), &self.total)]) {
            let days: usize = v.germinated.iter().sum();
            if days != v.germinated_any {
                out.push(format!("{name}: days sum to {days}, any-day count says {}", v.germinated_any));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelRecord {
    pub variety: String,
    pub dish: String,
    pub kernel: String,
    pub germination_day: Option<u32>,
    pub rgb_days: BTreeSet<u32>,
    pub hsi_days: BTreeSet<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArchiveIndex {
    pub kernels: Vec<KernelRecord>,
}

/// Reads the archive layout described in the module docs.
pub fn parse_archive(root: &Path) -> Result<ArchiveIndex> {
    let labels_path = root.join(LABELS_FILE);
    let text = std::fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim().to_ascii_lowercase());
    if header.as_deref() != Some("variety,dish,kernel,germination_day") {
        return Err(Error::Format(format!(
            "{}: header must be `variety,dish,kernel,germination_day`",
            labels_path.display()
        )));
    }
    let mut kernels = Vec::new();
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Format(format!("{} line {}: `{line}`", labels_path.display(), i + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 || f[..3].iter().any(|s| s.is_empty()) {
            return Err(bad());
        }
        let germination_day = match f[3] {
            "" => None,
            s => Some(s.parse::<u32>().ok().filter(|d| LABEL_DAYS.contains(d)).ok_or_else(bad)?),
        };
        let dir = root.join(f[0]).join(f[1]).join(f[2]);
        let (mut rgb_days, mut hsi_days) = (BTreeSet::new(), BTreeSet::new());
        if let Ok(entries) = std::fs::read_dir(&dir) {
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let stem = name.split('.').next().unwrap_or("");
                let Some(rest) = stem.strip_prefix("day") else { continue };
                let Some((d, m)) = rest.split_once('_') else { continue };
                let Ok(d) = d.parse::<u32>() else { continue };
                match m {
                    "rgb" => rgb_days.insert(d),
                    "hsi" => hsi_days.insert(d),
                    _ => continue,
                };
            }
        }
        kernels.push(KernelRecord {
            variety: f[0].to_string(),
            dish: f[1].to_string(),
            kernel: f[2].to_string(),
            germination_day,
            rgb_days,
            hsi_days,
        });
    }
    Ok(ArchiveIndex { kernels })
}

impl ArchiveIndex {
    pub fn counts(&self, variety: Option<&str>) -> VarietyCounts {
        let ks: Vec<&KernelRecord> = self
            .kernels
            .iter()
            .filter(|k| variety.is_none_or(|v| k.variety == v))
            .collect();
        let dishes: BTreeSet<(&str, &str)> = ks.iter().map(|k| (k.variety.as_str(), k.dish.as_str())).collect();
        let mut germinated = [0; 5];
        for k in &ks {
            if let Some(d) = k.germination_day {
                germinated[d as usize - 1] += 1;
            }
        }
        VarietyCounts {
            kernels: ks.len(),
            dishes: dishes.len(),
            germinated,
            germinated_any: germinated.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub item: String,
    pub expected: String,
    pub found: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// `variety/dish/kernel: modality day d` for every absent session file.
    pub missing_sessions: Vec<String>,
    pub unexpected_varieties: Vec<String>,
    /// Internal inconsistencies of the expectation itself.
    pub expectation_notes: Vec<String>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn discrepancies(&self) -> usize {
        self.checks.iter().filter(|c| !c.ok).count() + self.missing_sessions.len() + self.unexpected_varieties.len()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.ok { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}: expected {}, found {}", c.item, c.expected, c.found);
        }
        for m in &self.missing_sessions {
            let _ = writeln!(s, "missing {m}");
        }
        for v in &self.unexpected_varieties {
            let _ = writeln!(s, "unexpected variety {v}");
        }
        for n in &self.expectation_notes {
            let _ = writeln!(s, "note: expected counts are inconsistent: {n}");
        }
        let _ = writeln!(s, "{}", if self.passed { "PASSED" } else { "DISCREPANCIES FOUND" });
        s
    }
}

fn compare(checks: &mut Vec<Check>, scope: &str, exp: &VarietyCounts, got: &VarietyCounts) {
    let mut push = |item: String, e: usize, f: usize| {
        checks.push(Check {
            item: format!("{scope} {item}"),
            expected: e.to_string(),
            found: f.to_string(),
            ok: e == f,
        })
    };
    push("kernels".into(), exp.kernels, got.kernels);
    push("dishes".into(), exp.dishes, got.dishes);
    for d in 0..5 {
        push(format!("germinated on day {}", d + 1), exp.germinated[d], got.germinated[d]);
    }
    push("germinated on any day".into(), exp.germinated_any, got.germinated_any);
}

/// Compares an archive with the expected counts. Mismatches are listed in
/// the report, never returned as errors.
pub fn validate_index(index: &ArchiveIndex, expected: &DatasetExpectation) -> ValidationReport {
    let mut checks = Vec::new();
    for (name, exp) in &expected.varieties {
        compare(&mut checks, name, exp, &index.counts(Some(name)));
    }
    compare(&mut checks, "total", &expected.total, &index.counts(None));

    let sessions: BTreeSet<u32> = SESSION_DAYS.take(expected.sessions).collect();
    let mut missing_sessions = Vec::new();
    for k in &index.kernels {
        for (m, have) in [("rgb", &k.rgb_days), ("hsi", &k.hsi_days)] {
            for d in sessions.difference(have) {
                missing_sessions.push(format!("{}/{}/{}: {m} day {d}", k.variety, k.dish, k.kernel));
            }
        }
    }
    let unexpected_varieties: Vec<String> = index
        .kernels
        .iter()
        .map(|k| k.variety.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|v| !expected.varieties.contains_key(v))
        .collect();
    let mut report = ValidationReport {
        checks,
        missing_sessions,
        unexpected_varieties,
        expectation_notes: expected.inconsistencies(),
        passed: false,
    };
    report.passed = report.discrepancies() == 0;
    report
}

pub fn cmd_validate_dataset(root: &Path, expected: &DatasetExpectation) -> Result<ValidationReport> {
    Ok(validate_index(&parse_archive(root)?, expected))
}

/// Small self-consistent expectation for tests and demos.
pub fn mini_expectation() -> DatasetExpectation {
    let v = |kernels, dishes, germinated: [usize; 5]| VarietyCounts {
        kernels,
        dishes,
        germinated,
        germinated_any: germinated.iter().sum(),
    };
    DatasetExpectation {
        varieties: BTreeMap::from([
            ("A".to_string(), v(30, 2, [1, 3, 2, 0, 1])),
            ("B".to_string(), v(20, 1, [0, 1, 0, 2, 0])),
        ]),
        total: v(50, 3, [1, 4, 2, 2, 1]),
        sessions: 6,
    }
}

/// Writes an archive in the layout [`parse_archive`] reads whose counts
/// match `expected` exactly. Session files are empty placeholders.
pub fn build_mini_archive(root: &Path, expected: &DatasetExpectation) -> Result<()> {
    if !expected.inconsistencies().is_empty() {
        return Err(Error::Invalid("expectation is not self-consistent".into()));
    }
    let mut labels = String::from("variety,dish,kernel,germination_day\n");
    for (name, v) in &expected.varieties {
        if v.dishes == 0 || v.kernels < v.dishes || v.germinated_any > v.kernels {
            return Err(Error::Invalid(format!("variety {name}: impossible counts")));
        }
        let mut days: Vec<Option<u32>> = Vec::with_capacity(v.kernels);
        for (d, &n) in v.germinated.iter().enumerate() {
            days.extend(std::iter::repeat_n(Some(d as u32 + 1), n));
        }
        days.resize(v.kernels, None);
        for (k, g) in days.into_iter().enumerate() {
            let dish = format!("dish{:02}", k % v.dishes);
            let kernel = format!("k{k:04}");
            let dir = root.join(name).join(&dish).join(&kernel);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for d in SESSION_DAYS.take(expected.sessions) {
                for m in ["rgb", "hsi"] {
                    let p = dir.join(format!("day{d}_{m}.cube.json"));
                    std::fs::write(&p, b"").map_err(|e| Error::io(&p, e))?;
                }
            }
            let g = g.map(|d| d.to_string()).unwrap_or_default();
            let _ = writeln!(labels, "{name},{dish},{kernel},{g}");
        }
    }
    let path = root.join(LABELS_FILE);
    std::fs::write(&path, labels).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_totals() {
        let p = DatasetExpectation::published();
        assert_eq!(p.total.kernels, 2242);
        assert_eq!(p.total.dishes, 90);
        assert_eq!(p.total.germinated, [28, 93, 106, 88, 67]);
        assert_eq!(p.total.germinated_any, 382);
        let any: Vec<usize> = p.varieties.values().map(|v| v.germinated_any).collect();
        assert_eq!(any, vec![91, 202, 83, 5]);
    }

    #[test]
    fn published_table_inconsistency_is_reported() {
        let notes = DatasetExpectation::published().inconsistencies();
        assert_eq!(notes.len(), 2, "{notes:?}");
        assert!(notes[0].contains("day 1") && notes[0].contains("27") && notes[0].contains("28"));
        assert!(notes[1].contains("any day") && notes[1].contains("381") && notes[1].contains("382"));
        assert!(mini_expectation().inconsistencies().is_empty());
    }

    #[test]
    fn mini_archive_passes() {
        let dir = tempfile::tempdir().unwrap();
        let exp = mini_expectation();
        build_mini_archive(dir.path(), &exp).unwrap();
        let r = cmd_validate_dataset(dir.path(), &exp).unwrap();
        assert!(r.passed, "{}", r.render());
        assert!(r.checks.iter().all(|c| c.ok));
    }

    #[test]
    fn missing_day_file_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let exp = mini_expectation();
        build_mini_archive(dir.path(), &exp).unwrap();
        std::fs::remove_file(dir.path().join("A/dish01/k0003/day4_hsi.cube.json")).unwrap();
        let r = cmd_validate_dataset(dir.path(), &exp).unwrap();
        assert!(!r.passed);
        assert_eq!(r.missing_sessions, vec!["A/dish01/k0003: hsi day 4".to_string()]);
        assert!(r.checks.iter().all(|c| c.ok));
    }

    #[test]
    fn count_mismatch_is_itemized() {
        let dir = tempfile::tempdir().unwrap();
        let exp = mini_expectation();
        build_mini_archive(dir.path(), &exp).unwrap();
        let labels = dir.path().join(LABELS_FILE);
        let text = std::fs::read_to_string(&labels).unwrap();
        // Kernel k0000 of B germinated on day 2; relabel it to day 5.
        let text = text.replace("B,dish00,k0000,2", "B,dish00,k0000,5");
        std::fs::write(&labels, text).unwrap();
        let r = cmd_validate_dataset(dir.path(), &exp).unwrap();
        let failed: Vec<&str> = r.checks.iter().filter(|c| !c.ok).map(|c| c.item.as_str()).collect();
        assert_eq!(
            failed,
            vec![
                "B germinated on day 2",
                "B germinated on day 5",
                "total germinated on day 2",
                "total germinated on day 5"
            ]
        );
        assert!(!r.passed);
    }

    #[test]
    fn bad_labels_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(LABELS_FILE), "variety,dish,kernel,germination_day\nA,d,k,9\n").unwrap();
        assert!(matches!(parse_archive(dir.path()), Err(Error::Format(_))));
        std::fs::write(dir.path().join(LABELS_FILE), "v,d\n").unwrap();
        assert!(matches!(parse_archive(dir.path()), Err(Error::Format(_))));
    }
}
