//! Experiment presets shipped with the crate. The text lives in the
//! `presets/` directory at the workspace root and is embedded at build time.

use crate::config::{parse_str, ExperimentFile};
use crate::error::{Error, Result};

/// `(name, TOML text)` of every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("maxwell-hyperboloid", include_str!("../../../presets/maxwell-hyperboloid.toml")),
    ("maxwell-layer", include_str!("../../../presets/maxwell-layer.toml")),
    ("advection", include_str!("../../../presets/advection.toml")),
    ("cubic-decay", include_str!("../../../presets/cubic-decay.toml")),
    ("linear-l2", include_str!("../../../presets/linear-l2.toml")),
    ("layer-1d", include_str!("../../../presets/layer-1d.toml")),
    ("hyperboloid-1d", include_str!("../../../presets/hyperboloid-1d.toml")),
];

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn source(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| {
            Error::Config(format!("unknown preset '{name}'; available: {}", names().join(", ")))
        })
}

pub fn load(name: &str) -> Result<ExperimentFile> {
    parse_str(source(name)?, &format!("preset {name}"))
}
