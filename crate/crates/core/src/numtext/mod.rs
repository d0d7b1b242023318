//! Numeric mention extraction and the per-scene numeric contract.

mod extract;
mod validate;
pub mod words;

pub use extract::{extract_numbers, NumberMention};
pub use validate::{
    normalize_ws, rule, validate_intro, validate_padding, validate_scene, Allowance, BeatSpec,
    SpecError, ValidationReport, Violation,
};
