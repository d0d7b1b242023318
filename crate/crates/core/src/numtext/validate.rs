use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::extract::{extract_numbers, NumberMention};

/// Which stray numbers a scene may contain beyond its required atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Allowance {
    /// No numeric mention at all.
    StrictZero,
    /// No mentions except "one", "two", "three" in word form.
    IntroLenient,
    /// Only the required atomic values.
    Beat,
}

/// Numeric contract for one scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatSpec {
    /// value -> exact number of mentions
    pub required_atomics: BTreeMap<i64, usize>,
    pub required_anchors: BTreeSet<String>,
    pub forbidden_values: BTreeSet<i64>,
    pub allowance: Allowance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("value {0} is both required and forbidden")]
    RequiredAndForbidden(i64),
    #[error("required count for {0} must be at least 1")]
    ZeroCount(i64),
    #[error("required atomics are only allowed with the BEAT allowance")]
    RequirementsOutsideBeat,
}

impl BeatSpec {
    pub fn strict_zero() -> Self {
        Self::empty(Allowance::StrictZero)
    }

    pub fn intro() -> Self {
        Self::empty(Allowance::IntroLenient)
    }

    fn empty(allowance: Allowance) -> Self {
        BeatSpec {
            required_atomics: BTreeMap::new(),
            required_anchors: BTreeSet::new(),
            forbidden_values: BTreeSet::new(),
            allowance,
        }
    }

    pub fn check(&self) -> Result<(), SpecError> {
        for (&value, &count) in &self.required_atomics {
            if count == 0 {
                return Err(SpecError::ZeroCount(value));
            }
            if self.forbidden_values.contains(&value) {
                return Err(SpecError::RequiredAndForbidden(value));
            }
        }
        if !self.required_atomics.is_empty() && self.allowance != Allowance::Beat {
            return Err(SpecError::RequirementsOutsideBeat);
        }
        Ok(())
    }
}

pub mod rule {
    pub const ATOMIC_FREQUENCY: &str = "R1.A";
    pub const ANCHOR_PRESENT: &str = "R1.C";
    pub const FORBIDDEN_VALUE: &str = "R2";
    pub const UNEXPECTED_NUMBER: &str = "R5";
    pub const HOLISTIC: &str = "HOLISTIC";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offending: Option<String>,
}

/// Verdict of a static or LLM validator. `is_valid` holds exactly when
/// `violations` is empty; the constructors maintain that.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub explanation_for_generator: String,
    #[serde(default)]
    pub explanation_for_audit: String,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        let is_valid = violations.is_empty();
        let (gen, audit) = if is_valid {
            (
                "All numeric rules satisfied.".to_string(),
                "No violations.".to_string(),
            )
        } else {
            let gen = violations
                .iter()
                .map(|v| v.message.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            let audit = violations
                .iter()
                .map(|v| match &v.offending {
                    Some(o) => format!("[{}] {} ({o:?})", v.rule, v.message),
                    None => format!("[{}] {}", v.rule, v.message),
                })
                .collect::<Vec<_>>()
                .join("; ");
            (gen, audit)
        };
        ValidationReport {
            is_valid,
            explanation_for_generator: gen,
            explanation_for_audit: audit,
            violations,
        }
    }

    /// Builds a report from a verdict whose fields may disagree, e.g. a model
    /// that answers `is_valid: false` without listing violations.
    pub fn from_verdict(
        is_valid: bool,
        explanation_for_generator: String,
        explanation_for_audit: String,
        mut violations: Vec<Violation>,
    ) -> Self {
        if !is_valid && violations.is_empty() {
            violations.push(Violation {
                rule: rule::HOLISTIC.to_string(),
                message: if explanation_for_generator.is_empty() {
                    "validator rejected the text without details".to_string()
                } else {
                    explanation_for_generator.clone()
                },
                offending: None,
            });
        }
        ValidationReport {
            is_valid: violations.is_empty(),
            explanation_for_generator,
            explanation_for_audit,
            violations,
        }
    }
}

/// Lowercase with runs of whitespace collapsed to one space.
pub fn normalize_ws(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn describe(m: &NumberMention) -> String {
    format!("{:?} at char {}", m.surface, m.char_offset)
}

/// Audits a scene against its numeric contract. All violations are
/// collected, in rule order R1.A, R1.C, R2, R5.
pub fn validate_scene(text: &str, spec: &BeatSpec) -> Result<ValidationReport, SpecError> {
    spec.check()?;
    let mentions = extract_numbers(text);
    let mut violations = Vec::new();

    for (&value, &expected) in &spec.required_atomics {
        let observed = mentions.iter().filter(|m| m.value == value).count();
        if observed != expected {
            violations.push(Violation {
                rule: rule::ATOMIC_FREQUENCY.to_string(),
                message: format!(
                    "The number {value} must be mentioned exactly {expected} time(s); observed={observed}, expected={expected}."
                ),
                offending: Some(value.to_string()),
            });
        }
    }

    let normalized = normalize_ws(text);
    for anchor in &spec.required_anchors {
        if !normalized.contains(&normalize_ws(anchor)) {
            violations.push(Violation {
                rule: rule::ANCHOR_PRESENT.to_string(),
                message: format!("The earlier result '{anchor}' must be referred to by name."),
                offending: Some(anchor.clone()),
            });
        }
    }

    for m in mentions
        .iter()
        .filter(|m| spec.forbidden_values.contains(&m.value))
    {
        violations.push(Violation {
            rule: rule::FORBIDDEN_VALUE.to_string(),
            message: format!(
                "The value {} must never be stated; remove {}.",
                m.value,
                describe(m)
            ),
            offending: Some(m.surface.clone()),
        });
    }

    for m in &mentions {
        if spec.forbidden_values.contains(&m.value) || spec.required_atomics.contains_key(&m.value)
        {
            continue;
        }
        let allowed = spec.allowance == Allowance::IntroLenient
            && (1..=3).contains(&m.value)
            && !m.is_digit_form();
        if !allowed {
            violations.push(Violation {
                rule: rule::UNEXPECTED_NUMBER.to_string(),
                message: format!("No other numbers are allowed; remove {}.", describe(m)),
                offending: Some(m.surface.clone()),
            });
        }
    }

    Ok(ValidationReport::from_violations(violations))
}

pub fn validate_intro(text: &str) -> ValidationReport {
    validate_scene(text, &BeatSpec::intro()).expect("empty intro spec is well formed")
}

pub fn validate_padding(text: &str) -> ValidationReport {
    validate_scene(text, &BeatSpec::strict_zero()).expect("empty padding spec is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(required: &[(i64, usize)], forbidden: &[i64]) -> BeatSpec {
        BeatSpec {
            required_atomics: required.iter().copied().collect(),
            required_anchors: BTreeSet::new(),
            forbidden_values: forbidden.iter().copied().collect(),
            allowance: Allowance::Beat,
        }
    }

    #[test]
    fn running_example_passes() {
        let text = "Her logs showed one crate of cryo-cells arrived, and later two additional crates were offloaded.";
        let r = validate_scene(text, &beat(&[(1, 1), (2, 1)], &[3])).unwrap();
        assert!(r.is_valid, "{r:?}");
        assert!(r.violations.is_empty());
    }

    #[test]
    fn forbidden_result_leak_is_r2() {
        let text = "One crate arrived, then two more, making three in all.";
        let r = validate_scene(text, &beat(&[(1, 1), (2, 1)], &[3])).unwrap();
        assert!(!r.is_valid);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, rule::FORBIDDEN_VALUE);
        assert_eq!(r.violations[0].offending.as_deref(), Some("three"));
    }

    #[test]
    fn frequency_shortfall_reports_counts() {
        let r = validate_scene("seven lanterns were lit", &beat(&[(7, 2)], &[])).unwrap();
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, rule::ATOMIC_FREQUENCY);
        assert!(r.violations[0].message.contains("observed=1, expected=2"));
    }

    #[test]
    fn all_violations_collected() {
        let mut spec = beat(&[(4, 1)], &[9]);
        spec.required_anchors.insert("The Sunstone Core".into());
        let r = validate_scene("nine and 12 but no four", &spec).unwrap();
        let rules: Vec<&str> = r.violations.iter().map(|v| v.rule.as_str()).collect();
        assert_eq!(rules, vec!["R1.C", "R2", "R5"]);
        let r = validate_scene("nine and 12", &spec).unwrap();
        let rules: Vec<&str> = r.violations.iter().map(|v| v.rule.as_str()).collect();
        assert_eq!(rules, vec!["R1.A", "R1.C", "R2", "R5"]);
    }

    #[test]
    fn anchor_match_is_case_and_space_insensitive() {
        let mut spec = beat(&[], &[]);
        spec.required_anchors.insert("Daily  Cell Intake".into());
        assert!(
            validate_scene("She recalled the daily cell\nintake.", &spec)
                .unwrap()
                .is_valid
        );
    }

    #[test]
    fn malformed_spec_is_config_error() {
        assert_eq!(
            validate_scene("", &beat(&[(3, 1)], &[3])).unwrap_err(),
            SpecError::RequiredAndForbidden(3)
        );
        assert_eq!(
            validate_scene("", &beat(&[(3, 0)], &[])).unwrap_err(),
            SpecError::ZeroCount(3)
        );
        let mut s = BeatSpec::intro();
        s.required_atomics.insert(2, 1);
        assert_eq!(
            validate_scene("", &s).unwrap_err(),
            SpecError::RequirementsOutsideBeat
        );
    }

    #[test]
    fn intro_rules() {
        assert!(validate_intro("Mist curled over the harbour.").is_valid);
        assert!(validate_intro("Two roads diverged in the wood.").is_valid);
        assert!(!validate_intro("Four roads diverged.").is_valid);
        let r = validate_intro("47 ships waited.");
        assert!(!r.is_valid);
        assert_eq!(r.violations[0].rule, rule::UNEXPECTED_NUMBER);
        assert!(!validate_intro("2 roads").is_valid);
    }

    #[test]
    fn padding_rules() {
        assert!(validate_padding("Rain drummed on the tin roof.").is_valid);
        assert!(!validate_padding("one of them laughed").is_valid);
        assert!(validate_padding("At first light they sailed.").is_valid);
    }

    #[test]
    fn verdict_normalisation_keeps_invariant() {
        let r = ValidationReport::from_verdict(false, "leak".into(), String::new(), vec![]);
        assert!(!r.is_valid);
        assert_eq!(r.violations.len(), 1);
        let v = Violation {
            rule: "R2".into(),
            message: "x".into(),
            offending: None,
        };
        let r = ValidationReport::from_verdict(true, String::new(), String::new(), vec![v]);
        assert!(!r.is_valid);
    }

    #[test]
    fn report_json_shape() {
        let r = validate_padding("three");
        let json = serde_json::to_value(&r).unwrap();
        for key in [
            "is_valid",
            "explanation_for_generator",
            "explanation_for_audit",
            "violations",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["violations"][0]["rule"], "R5");
    }
}
