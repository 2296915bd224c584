//! Layered run configuration: defaults < `GRAINPIPE_SEED` < config file <
//! command-line overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gridfind::GridParams;
use crate::kernelproc::SpectrumParams;
use crate::standardize::StandardizeParams;
use crate::vision::RansacParams;

pub const SEED_ENV: &str = "GRAINPIPE_SEED";
pub const DEFAULT_SEED: u64 = 0;
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. `ransac.seed` always follows it.
    pub seed: u64,
    /// Dish-level worker threads for `run`; 0 means one per core.
    pub workers: usize,
    pub standardize: StandardizeParams,
    pub grid: GridParams,
    pub ransac: RansacParams,
    pub spectrum: SpectrumParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            workers: 0,
            standardize: StandardizeParams::default(),
            grid: GridParams::default(),
            ransac: RansacParams::default(),
            spectrum: SpectrumParams::default(),
        }
    }
}

impl PipelineConfig {
    /// Defaults, then `GRAINPIPE_SEED` from the environment, then `file`,
    /// then `overrides` (`section.key=value`).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let env = std::env::var(SEED_ENV).ok();
        Self::resolve(file, env.as_deref(), overrides)
    }

    /// [`PipelineConfig::load`] with the environment passed in explicitly.
    pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Self::default()).expect("config serializes");
        if let Some(s) = env_seed {
            let seed: u64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Invalid(format!("{SEED_ENV}=`{s}` is not an unsigned integer")))?;
            tree["seed"] = Value::from(seed);
        }
        if let Some(path) = file {
            merge(&mut tree, read_layer(path)?, "")?;
        }
        for o in overrides {
            let (key, value) = parse_override(o)?;
            let mut layer = value;
            for part in key.split('.').rev() {
                let mut m = serde_json::Map::new();
                m.insert(part.to_string(), layer);
                layer = Value::Object(m);
            }
            merge(&mut tree, layer, "")?;
        }
        let mut cfg: Self =
            serde_json::from_value(tree).map_err(|e| Error::Invalid(format!("configuration: {e}")))?;
        cfg.ransac.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Writes `config.json` into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.to_json()).map_err(|e| Error::io(&path, e))
    }
}

fn read_layer(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    } else {
        let table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        serde_json::to_value(table).map_err(|e| Error::json(path, e))
    }
}

/// `a.b=value`; the value is read as a TOML value and falls back to a bare
/// string.
fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Invalid(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Invalid(format!("override `{s}` has an empty key")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).expect("toml value converts"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

/// Overlays `layer` onto `base`. Keys absent from `base` are rejected so
/// that typos do not pass silently.
fn merge(base: &mut Value, layer: Value, at: &str) -> Result<()> {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                let path = if at.is_empty() { k.clone() } else { format!("{at}.{k}") };
                let slot = b
                    .get_mut(&k)
                    .ok_or_else(|| Error::Invalid(format!("unknown configuration key `{path}`")))?;
                merge(slot, v, &path)?;
            }
            Ok(())
        }
        (Value::Object(_), l) => Err(Error::Invalid(format!("configuration key `{at}` is a section, got {l}"))),
        (b, l) => {
            *b = l;
            Ok(())
        }
    }
}
