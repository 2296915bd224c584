//! Synthetic runs: rendered frames for a few dishes plus their manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::commands::write_json;
use super::manifest::{cell_key, DayEntry, RunManifest, SessionManifest, LABEL_DAYS, SESSION_DAYS};
use crate::error::{Error, Result};
use crate::geometry::{Affine2D, Point2};
use crate::pixcodec::write_cube;
use crate::synthscene::{render_reference, render_session, Rendered, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub seed: u64,
    pub dishes: usize,
    pub days: Vec<u32>,
    pub hsi: bool,
    pub glints: bool,
    /// Scene used for every dish instead of `SceneSpec::random`.
    pub spec: Option<SceneSpec>,
    /// Bounds of the per-session dish motion.
    pub max_shift: f64,
    pub max_rotation_deg: f64,
    pub variety: String,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            dishes: 1,
            days: SESSION_DAYS.collect(),
            hsi: true,
            glints: false,
            spec: None,
            max_shift: 6.0,
            max_rotation_deg: 3.0,
            variety: "synthetic".into(),
        }
    }
}

/// Per-session dish motion, about the dish center.
pub fn session_affine(spec: &SceneSpec, opts: &SynthOptions, dish: usize, day: u32) -> Affine2D {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((dish as u64) << 20) ^ (u64::from(day) << 8) ^ 0xa5);
    let angle = rng.random_range(-opts.max_rotation_deg..=opts.max_rotation_deg).to_radians();
    let shift = Point2::new(
        rng.random_range(-opts.max_shift..=opts.max_shift),
        rng.random_range(-opts.max_shift..=opts.max_shift),
    );
    Affine2D::about(spec.dish_center, angle, 1.0, shift)
}

/// Monotone labels: each kernel germinates on a random day or never.
fn random_labels(rng: &mut ChaCha8Rng, cells: usize) -> BTreeMap<String, BTreeMap<u32, bool>> {
    let mut out = BTreeMap::new();
    for i in 0..cells {
        for j in 0..cells {
            let g: Option<u32> = rng.random_bool(0.6).then(|| rng.random_range(LABEL_DAYS));
            let labels = LABEL_DAYS.map(|d| (d, g.is_some_and(|g| d >= g))).collect();
            out.insert(cell_key((i, j)), labels);
        }
    }
    out
}

fn save_rendered(r: &Rendered, dir: &Path, stem: &str) -> Result<(PathBuf, Option<PathBuf>)> {
    let frame = PathBuf::from(format!("{stem}.cube.json"));
    write_cube(&r.raw, &dir.join(&frame))?;
    write_json(&dir.join(format!("{stem}.truth.json")), &r.truth)?;
    let dark = match &r.dark {
        Some(d) => {
            let p = PathBuf::from(format!("{stem}_dark.cube.json"));
            write_cube(d, &dir.join(&p))?;
            Some(p)
        }
        None => None,
    };
    Ok((frame, dark))
}

/// Renders every dish and session into `out/<dish>/` and writes
/// `out/manifest.json` with paths relative to `out`.
pub fn synth_run(out: &Path, opts: &SynthOptions) -> Result<RunManifest> {
    if opts.days.iter().any(|d| !SESSION_DAYS.contains(d)) {
        return Err(Error::Invalid("synthetic days must lie in 0..=5".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("synth.json"), opts)?;
    let mut dishes = Vec::with_capacity(opts.dishes);
    for k in 0..opts.dishes {
        let dish_id = format!("dish{k:02}");
        let dir = out.join(&dish_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut spec = opts
            .spec
            .clone()
            .unwrap_or_else(|| SceneSpec::random(opts.seed.wrapping_add(k as u64)));
        if opts.glints {
            spec = spec.with_glints();
        }
        write_json(&dir.join("scene.json"), &spec)?;
        let rel = |p: PathBuf| PathBuf::from(&dish_id).join(p);

        let (reference, _) = save_rendered(&render_reference(&spec), &dir, "reference")?;
        let mut days = Vec::new();
        for &day in &opts.days {
            let s = render_session(&spec, day, &session_affine(&spec, opts, k, day));
            let (rgb, _) = save_rendered(&s.rgb, &dir, &format!("day{day}_rgb"))?;
            let (hsi, dark) = if opts.hsi {
                let (h, d) = save_rendered(&s.hsi, &dir, &format!("day{day}_hsi"))?;
                (Some(rel(h)), d.map(rel))
            } else {
                (None, None)
            };
            days.push(DayEntry {
                day,
                rgb_frame: rel(rgb),
                hsi_frame: hsi,
                dark_frame: dark,
                grid_file: None,
                markers_file: None,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x1abe1 ^ k as u64);
        dishes.push(SessionManifest {
            dish_id: dish_id.clone(),
            variety: opts.variety.clone(),
            reference_frame: Some(rel(reference)),
            reference_markers_file: None,
            grid_file: None,
            days,
            germination: random_labels(&mut rng, spec.n_cells()),
        });
    }
    let manifest = RunManifest { dishes };
    manifest.validate()?;
    manifest.save(&out.join("manifest.json"))?;
    Ok(manifest)
}
