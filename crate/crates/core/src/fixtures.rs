//! Bundled example models.
//!
//! Files are compiled in; setting `HFNET_FIXTURES` to a directory makes
//! [`load`] and [`source`] read from there instead.

use std::path::{Path, PathBuf};

use crate::model::{ModelError, SystemModel};

/// The six reference systems, one per domain plus the electromechanical motor.
pub const NAMES: [&str; 6] = [
    "electrical",
    "translational",
    "rotational",
    "fluidic",
    "thermal",
    "electromechanical",
];

pub const MALFORMED: [&str; 5] = [
    "malformed/across_source_loop",
    "malformed/through_source_cutset",
    "malformed/rank_deficient",
    "malformed/underdetermined",
    "malformed/inconsistent",
];

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../fixtures/", $name, ".json")))),*]
    };
}

static BUNDLED: &[(&str, &str)] = bundled![
    "electrical",
    "translational",
    "rotational",
    "fluidic",
    "thermal",
    "electromechanical",
    "bondgraph/electrical",
    "bondgraph/translational",
    "bondgraph/rotational",
    "bondgraph/fluidic",
    "bondgraph/thermal",
    "bondgraph/electromechanical",
    "malformed/across_source_loop",
    "malformed/through_source_cutset",
    "malformed/rank_deficient",
    "malformed/underdetermined",
    "malformed/inconsistent",
];

/// Every bundled fixture name.
pub fn all() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

fn override_dir() -> Option<PathBuf> {
    std::env::var_os("HFNET_FIXTURES").map(PathBuf::from)
}

/// JSON text of a fixture.
pub fn source(name: &str) -> Result<String, ModelError> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    if let Some(dir) = override_dir() {
        let path = dir.join(format!("{name}.json"));
        return std::fs::read_to_string(&path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        });
    }
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| text.to_string())
        .ok_or_else(|| ModelError::Io {
            path: format!("fixture `{name}`"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such fixture"),
        })
}

pub fn load(name: &str) -> Result<SystemModel, ModelError> {
    SystemModel::from_json_str(&source(name)?)
}

/// Loads `arg` as a file path if it exists, otherwise as a fixture name.
pub fn resolve(arg: &str) -> Result<SystemModel, ModelError> {
    if Path::new(arg).is_file() {
        SystemModel::load(arg)
    } else {
        match load(arg) {
            Err(ModelError::Io { .. }) => SystemModel::load(arg),
            other => other,
        }
    }
}
