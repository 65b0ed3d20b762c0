use crate::error::{Error, Result};

use super::config::ExperimentConfig;

pub const PRESET_NAMES: [&str; 5] = [
    "motivating",
    "exp1-known",
    "exp1-unknown",
    "exp2",
    "exp2-unknown",
];

pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "motivating" => include_str!("../../presets/motivating.toml"),
        "exp1-known" => include_str!("../../presets/exp1-known.toml"),
        "exp1-unknown" => include_str!("../../presets/exp1-unknown.toml"),
        "exp2" => include_str!("../../presets/exp2.toml"),
        "exp2-unknown" => include_str!("../../presets/exp2-unknown.toml"),
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let text = preset_source(name).ok_or_else(|| {
        Error::Validation(format!(
            "unknown preset {name} (known: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::from_toml(text, &format!("preset {name}"))
}
