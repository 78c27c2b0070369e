//! Models shipped with the crate.

use crate::io::{parse_model, ModelFileError};
use crate::model::InfluenceDiagram;

/// Reduced COPD exacerbation pathway with elicited tables.
pub const COPD_MODEL: &str = include_str!("../data/copd.model.json");

/// Full COPD pathway diagram before reduction, with its reduction script.
pub const COPD_FULL_MODEL: &str = include_str!("../data/copd_full.model.json");

/// Prefix naming a bundled model in place of a file path.
pub const BUILTIN_PREFIX: &str = "builtin:";

pub fn builtin_text(name: &str) -> Option<&'static str> {
    match name {
        "copd" => Some(COPD_MODEL),
        "copd-full" => Some(COPD_FULL_MODEL),
        _ => None,
    }
}

pub fn copd() -> InfluenceDiagram {
    parse_model(COPD_MODEL).expect("bundled model is valid")
}

pub fn copd_full() -> Result<InfluenceDiagram, ModelFileError> {
    parse_model(COPD_FULL_MODEL)
}
