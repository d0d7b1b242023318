//! Narrative generation: world, anchors, intro, beats with critic loop,
//! padding under a token budget, and the final question.

mod anchors;
mod assemble;
pub mod audit;
pub mod batch;
mod beat;
mod padding;
pub mod templates;
mod world;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use anchors::{check_anchor, deterministic_anchor, AnchorReject};
pub use assemble::{
    holistic_validate, GeneratedSample, GenerationMetadata, HolisticStatus, RetryCounts,
};
pub use beat::build_beat_spec;
pub use templates::PromptSet;

use crate::ast::TreeShapeConfig;
use crate::llm::{
    ChatRequest, Gateway, GatewayError, Purpose, ResponseSchema, TokenCounter, MAX_API_TOKEN_LIMIT,
};
use crate::numtext::{BeatSpec, ValidationReport};
use templates::TemplateError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    #[serde(rename = "WORLD_GEN_TEMP")]
    pub world: f64,
    #[serde(rename = "BEAT_GEN_TEMP")]
    pub beat: f64,
    #[serde(rename = "CREATIVE_NARRATIVE_TEMP")]
    pub creative: f64,
    #[serde(rename = "ANCHOR_GEN_TEMP")]
    pub anchor: f64,
    #[serde(rename = "LLM_VALIDATOR_TEMP")]
    pub validator: f64,
    #[serde(rename = "BEAT_REVISION_TEMP")]
    pub revision: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            world: 0.9,
            beat: 0.5,
            creative: 0.5,
            anchor: 0.85,
            validator: 0.05,
            revision: 0.1,
        }
    }
}

/// Attempt budgets. Each is a total attempt count, so 1 means "no retry".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryBudgets {
    #[serde(rename = "MAX_LLM_VALIDATION_ITERATIONS")]
    pub llm_validation_iterations: u32,
    #[serde(rename = "MAX_BEAT_RETRIES")]
    pub beat_retries: u32,
    #[serde(rename = "MAX_PAD_RETRIES")]
    pub pad_retries: u32,
    #[serde(rename = "INTRO_MAX_RETRIES")]
    pub intro_retries: u32,
    #[serde(rename = "WORLDGEN_MAX_RETRIES")]
    pub worldgen_retries: u32,
}

impl Default for RetryBudgets {
    fn default() -> Self {
        RetryBudgets {
            llm_validation_iterations: 6,
            beat_retries: 5,
            pad_retries: 7,
            intro_retries: 3,
            worldgen_retries: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    #[serde(flatten)]
    pub tree: TreeShapeConfig<i64>,
    #[serde(rename = "MODEL")]
    pub model: String,
    #[serde(rename = "LLM_VALIDATOR_MODEL")]
    pub validator_model: String,
    #[serde(rename = "HOLISTIC_VALIDATOR_MODEL")]
    pub holistic_model: String,
    #[serde(rename = "MAX_TOTAL_TOKENS")]
    pub max_total_tokens: usize,
    #[serde(rename = "MAX_TOKENS_BUFFER")]
    pub tokens_buffer: usize,
    #[serde(rename = "PADDING_MAX_TOK_PERCENT")]
    pub padding_max_tok_percent: f64,
    #[serde(rename = "MAX_PAD_PARAGRAPHS")]
    pub max_pad_paragraphs: usize,
    /// Requested size of one padding paragraph.
    #[serde(rename = "PAD_PARAGRAPH_TOKENS")]
    pub pad_paragraph_tokens: usize,
    #[serde(rename = "USE_NARRATIVE_ANCHORS")]
    pub use_narrative_anchors: bool,
    #[serde(rename = "USE_LLM_NAMING")]
    pub use_llm_naming: bool,
    #[serde(rename = "MAX_ANCHOR_WORDS")]
    pub max_anchor_words: usize,
    #[serde(rename = "MIN_WORLD_CHARS")]
    pub min_world_chars: usize,
    #[serde(rename = "MAX_WORLD_CHARS")]
    pub max_world_chars: usize,
    #[serde(rename = "MIN_WORLD_CONCEPTS")]
    pub min_world_concepts: usize,
    #[serde(rename = "MAX_WORLD_CONCEPTS")]
    pub max_world_concepts: usize,
    #[serde(rename = "CONTEXT_SNIPPET_CHARS")]
    pub context_snippet_chars: usize,
    /// Run the holistic validator at the end of generation.
    #[serde(rename = "HOLISTIC_INLINE")]
    pub holistic_inline: bool,
    #[serde(rename = "MAX_API_TOKEN_LIMIT")]
    pub max_api_tokens: u32,
    #[serde(flatten)]
    pub temperatures: Temperatures,
    #[serde(flatten)]
    pub retries: RetryBudgets,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            tree: TreeShapeConfig::default(),
            model: "google/gemini-2.5-flash-preview:thinking".into(),
            validator_model: "google/gemini-2.5-flash-preview:thinking".into(),
            holistic_model: "google/gemini-2.5-pro-preview".into(),
            max_total_tokens: 10_000,
            tokens_buffer: 500,
            padding_max_tok_percent: 0.75,
            max_pad_paragraphs: 30,
            pad_paragraph_tokens: 300,
            use_narrative_anchors: true,
            use_llm_naming: true,
            max_anchor_words: 5,
            min_world_chars: 6,
            max_world_chars: 8,
            min_world_concepts: 3,
            max_world_concepts: 7,
            context_snippet_chars: 400,
            holistic_inline: false,
            max_api_tokens: MAX_API_TOKEN_LIMIT,
            temperatures: Temperatures::default(),
            retries: RetryBudgets::default(),
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.tree.validate().map_err(|e| e.to_string())?;
        let r = &self.retries;
        for (name, v) in [
            ("MAX_LLM_VALIDATION_ITERATIONS", r.llm_validation_iterations),
            ("MAX_BEAT_RETRIES", r.beat_retries),
            ("MAX_PAD_RETRIES", r.pad_retries),
            ("INTRO_MAX_RETRIES", r.intro_retries),
            ("WORLDGEN_MAX_RETRIES", r.worldgen_retries),
        ] {
            if v < 1 {
                return Err(format!("{name} must be at least 1"));
            }
        }
        if !(self.padding_max_tok_percent > 0.0 && self.padding_max_tok_percent <= 1.0) {
            return Err("PADDING_MAX_TOK_PERCENT must be in (0, 1]".into());
        }
        if self.tokens_buffer >= self.max_total_tokens {
            return Err("MAX_TOKENS_BUFFER must be smaller than MAX_TOTAL_TOKENS".into());
        }
        if self.min_world_chars < 1 || self.min_world_chars > self.max_world_chars {
            return Err("MIN_WORLD_CHARS..MAX_WORLD_CHARS is empty".into());
        }
        // the deterministic fallback needs "the <adj> <adj> <noun>"
        if self.max_anchor_words < 4 {
            return Err("MAX_ANCHOR_WORDS must be at least 4".into());
        }
        if self.max_api_tokens > MAX_API_TOKEN_LIMIT {
            return Err(format!(
                "MAX_API_TOKEN_LIMIT cannot exceed {MAX_API_TOKEN_LIMIT}"
            ));
        }
        let t = &self.temperatures;
        for v in [
            t.world,
            t.beat,
            t.creative,
            t.anchor,
            t.validator,
            t.revision,
        ] {
            if !(0.0..=2.0).contains(&v) {
                return Err(format!("temperature {v} outside [0, 2]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Character {
    pub name: String,
    pub role: String,
    pub quirk: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub characters: Vec<Character>,
    pub genre: String,
    pub setting: String,
    pub primary_object: String,
}

impl WorldMeta {
    pub fn validate(&self, cfg: &GenConfig) -> Result<(), String> {
        let n = self.characters.len();
        if n < cfg.min_world_chars || n > cfg.max_world_chars {
            return Err(format!(
                "{n} characters, expected {}..={}",
                cfg.min_world_chars, cfg.max_world_chars
            ));
        }
        let fields = [
            ("genre", &self.genre),
            ("setting", &self.setting),
            ("primary_object", &self.primary_object),
        ];
        for (name, v) in fields {
            if v.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        for c in &self.characters {
            if c.name.trim().is_empty() || c.role.trim().is_empty() || c.quirk.trim().is_empty() {
                return Err("character with an empty field".into());
            }
        }
        if self.primary_object.chars().any(|c| c.is_ascii_digit()) {
            return Err("primary_object contains digits".into());
        }
        Ok(())
    }

    fn roster(&self) -> String {
        self.characters
            .iter()
            .map(|c| format!("- {}, {} ({})", c.name, c.role, c.quirk))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// node_id -> anchor name.
pub type AnchorTable = BTreeMap<usize, String>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Intro,
    Beat,
    Padding,
    Question,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStage {
    Critic,
    Static,
}

/// One verdict in a beat's history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionEntry {
    /// Outer (whole-beat) attempt, from 1.
    pub attempt: u32,
    /// Critic iteration within the attempt, from 1.
    pub iteration: u32,
    pub stage: CheckStage,
    pub verdict: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub kind: SceneKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<usize>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<BeatSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revision_log: Vec<RevisionEntry>,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("world generation failed after {attempts} attempt(s): {reason}")]
    World { attempts: u32, reason: String },
    #[error("intro failed after {attempts} attempt(s): {reason}")]
    Intro { attempts: u32, reason: String },
    #[error("beat for node {node_id} failed after {attempts} attempt(s): {reason}")]
    Beat {
        node_id: usize,
        attempts: u32,
        reason: String,
    },
    #[error("narrative of {tokens} tokens exceeds the budget of {limit}")]
    Budget { tokens: usize, limit: usize },
    #[error("holistic validation rejected the sample: {0}")]
    Holistic(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("cancelled before start")]
    Cancelled,
}

pub(crate) fn verdict_schema() -> ResponseSchema {
    ResponseSchema::new(json!({
        "type": "object",
        "required": ["is_valid", "explanation_for_generator"],
        "properties": {
            "is_valid": {"type": "boolean"},
            "explanation_for_generator": {"type": "string"},
            "explanation_for_audit": {"type": "string"},
            "violations": {
                "type": "array",
                "items": {"type": "object", "required": ["rule", "message"]}
            }
        }
    }))
}

/// Verdict JSON as a validator model returns it.
#[derive(Debug, Deserialize)]
pub(crate) struct RawVerdict {
    is_valid: bool,
    #[serde(default)]
    explanation_for_generator: String,
    #[serde(default)]
    explanation_for_audit: String,
    #[serde(default)]
    violations: Vec<crate::numtext::Violation>,
}

pub(crate) fn parse_verdict(json: &str) -> Result<ValidationReport, String> {
    let v: RawVerdict = serde_json::from_str(json).map_err(|e| e.to_string())?;
    Ok(ValidationReport::from_verdict(
        v.is_valid,
        v.explanation_for_generator,
        v.explanation_for_audit,
        v.violations,
    ))
}

/// Last `n` characters of `text`.
pub fn tail_chars(text: &str, n: usize) -> &str {
    match text.char_indices().rev().nth(n.saturating_sub(1)) {
        Some((i, _)) if n > 0 => &text[i..],
        _ if n == 0 => "",
        _ => text,
    }
}

/// Generation context for one sample: the shared gateway plus per-sample
/// identity used to key offline backends.
pub struct Forge<'a> {
    pub gateway: &'a Gateway,
    pub cfg: &'a GenConfig,
    pub prompts: &'a PromptSet,
    pub counter: Arc<dyn TokenCounter>,
    pub sample_id: String,
}

impl<'a> Forge<'a> {
    pub fn new(
        gateway: &'a Gateway,
        cfg: &'a GenConfig,
        prompts: &'a PromptSet,
        counter: Arc<dyn TokenCounter>,
        sample_id: impl Into<String>,
    ) -> Self {
        Forge {
            gateway,
            cfg,
            prompts,
            counter,
            sample_id: sample_id.into(),
        }
    }

    fn tokens(&self, text: &str) -> usize {
        self.counter.count(text)
    }

    fn context(&self, world: Option<&WorldMeta>, extra: Value) -> Value {
        let mut ctx = json!({"sample_id": self.sample_id});
        if let Some(w) = world {
            ctx["world"] = serde_json::to_value(w).expect("world serializes");
        }
        if let Value::Object(m) = extra {
            for (k, v) in m {
                ctx[k] = v;
            }
        }
        ctx
    }

    #[allow(clippy::too_many_arguments)]
    fn ask(
        &self,
        purpose: Purpose,
        model: &str,
        prompt: String,
        temperature: f64,
        context: Value,
        schema: Option<ResponseSchema>,
    ) -> Result<String, GatewayError> {
        let mut req = ChatRequest::new(model, "", prompt)
            .temperature(temperature)
            .max_tokens(self.cfg.max_api_tokens)
            .purpose(purpose)
            .context(context);
        req.response_schema = schema;
        self.gateway.chat(&req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_are_flat_identifiers() {
        let v = serde_json::to_value(GenConfig::default()).unwrap();
        for key in [
            "MAX_OPS",
            "MAX_TOTAL_TOKENS",
            "WORLD_GEN_TEMP",
            "MAX_BEAT_RETRIES",
            "PADDING_MAX_TOK_PERCENT",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let cfg: GenConfig =
            serde_json::from_str(r#"{"MAX_TOTAL_TOKENS": 2000, "BEAT_GEN_TEMP": 0.3}"#).unwrap();
        assert_eq!(cfg.max_total_tokens, 2000);
        assert_eq!(cfg.temperatures.beat, 0.3);
        assert_eq!(cfg.retries.pad_retries, 7);
        assert_eq!(cfg.tree.max_ops, 8);
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        let mut c = GenConfig::default();
        c.retries.beat_retries = 0;
        assert!(c.validate().is_err());
        let c = GenConfig {
            padding_max_tok_percent: 1.5,
            ..GenConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn tail_is_char_safe() {
        assert_eq!(tail_chars("héllo", 3), "llo");
        assert_eq!(tail_chars("hé", 5), "hé");
        assert_eq!(tail_chars("abc", 0), "");
    }
}
