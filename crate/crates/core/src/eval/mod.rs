//! Scoring models on stored samples.

mod divergence;
mod wilson;

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::sync::LazyLock;

pub use divergence::{
    diagnose, divergence_by_depth, divergence_csv, step_divergence, AlignmentError, DepthRow,
    NodeCheck, StepDiagnostic,
};
pub use wilson::{wilson_ci, WilsonError};

use crate::dataset::SampleRecord;
use crate::forge::templates::{self, PromptSet};
use crate::llm::{ChatRequest, Gateway, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// The whole trimmed reply must be one integer.
    Strict,
    /// The last integer anywhere in the reply.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    #[serde(rename = "EVAL_MODEL")]
    pub model_id: String,
    #[serde(rename = "EVAL_TEMPERATURE")]
    pub temperature: f64,
    #[serde(rename = "EVAL_TOP_P")]
    pub top_p: f64,
    #[serde(rename = "ANSWER_PARSE_MODE")]
    pub answer_parse_mode: ParseMode,
    /// Reasoning models spend much of this before answering.
    #[serde(rename = "EVAL_MAX_TOKENS")]
    pub max_tokens: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            model_id: "google/gemini-2.5-pro-preview".into(),
            temperature: 0.01,
            top_p: 0.95,
            answer_parse_mode: ParseMode::Lenient,
            max_tokens: 16_000,
        }
    }
}

static STRICT_INT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[+-]?\d+$").unwrap());
static ANY_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"-?\d+(?:,\d{3})*(?:\.\d+)?").unwrap());

/// Extracts the model's integer answer, or `None` if there is none.
pub fn parse_answer(raw: &str, mode: ParseMode) -> Option<i64> {
    match mode {
        ParseMode::Strict => {
            let t = raw.trim();
            STRICT_INT.is_match(t).then(|| t.parse().ok()).flatten()
        }
        ParseMode::Lenient => ANY_NUMBER
            .find_iter(raw)
            .filter_map(|m| {
                let mut s = m.as_str();
                // "3-7" is a range, not minus seven
                if s.starts_with('-')
                    && raw[..m.start()]
                        .chars()
                        .next_back()
                        .is_some_and(|c| c.is_alphanumeric())
                {
                    s = &s[1..];
                }
                let s = s.replace(',', "");
                match s.split_once('.') {
                    Some((int, frac)) if frac.bytes().all(|b| b == b'0') => int.parse().ok(),
                    Some(_) => None,
                    None => s.parse().ok(),
                }
            })
            .last(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub id: String,
    pub raw_output: String,
    pub parsed_answer: Option<i64>,
    pub expected: i64,
    pub correct: bool,
}

/// A sample that was not scored, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excluded {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Narrative,
    BareListops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model: String,
    pub task: EvalTask,
    pub per_sample: Vec<ScoredSample>,
    /// Transport failures; not counted in `n`.
    pub errored: Vec<Excluded>,
    /// Failed the schema gate before prompting; not counted in `n`.
    pub rejected: Vec<Excluded>,
    pub n: usize,
    pub k_correct: usize,
    pub accuracy: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

impl EvalResult {
    pub fn summary(&self) -> serde_json::Value {
        json!({
            "model": self.model,
            "n": self.n,
            "k": self.k_correct,
            "accuracy": self.accuracy,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
        })
    }

    /// "accuracy 55.3% (52.2–58.4)"
    pub fn headline(&self) -> String {
        format!(
            "accuracy {:.1}% ({:.1}–{:.1})",
            self.accuracy * 100.0,
            self.wilson_low * 100.0,
            self.wilson_high * 100.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    Empty,
    #[error("no sample could be scored ({errored} errored, {rejected} rejected)")]
    NothingScored { errored: usize, rejected: usize },
    #[error("{0}")]
    Setup(String),
}

pub struct EvalRun<'a> {
    pub gateway: &'a Gateway,
    pub cfg: &'a EvalConfig,
    pub prompts: &'a PromptSet,
    pub workers: usize,
    pub cancel: Option<&'a AtomicBool>,
}

enum Outcome {
    Scored(ScoredSample),
    Errored(Excluded),
    Rejected(Excluded),
}

impl EvalRun<'_> {
    /// Sends each sample's text verbatim and scores the reply.
    pub fn evaluate(&self, samples: &[SampleRecord]) -> Result<EvalResult, EvalError> {
        self.run(samples, EvalTask::Narrative, |s| {
            Ok(s.full_text_for_eval.clone())
        })
    }

    /// The same trees as bare expressions, without narrative.
    pub fn evaluate_bare_listops(&self, samples: &[SampleRecord]) -> Result<EvalResult, EvalError> {
        self.run(samples, EvalTask::BareListops, |s| {
            s.parse_ast().map_err(|v| v.to_string())?;
            self.prompts
                .render(templates::BARE_LISTOPS, &[("ast_str", &s.ast_str)])
                .map_err(|e| e.to_string())
        })
    }

    fn run(
        &self,
        samples: &[SampleRecord],
        task: EvalTask,
        prompt_for: impl Fn(&SampleRecord) -> Result<String, String> + Sync,
    ) -> Result<EvalResult, EvalError> {
        if samples.is_empty() {
            return Err(EvalError::Empty);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| EvalError::Setup(e.to_string()))?;
        let outcomes: Vec<Outcome> = pool.install(|| {
            samples
                .par_iter()
                .map(|s| {
                    let prompt = match prompt_for(s) {
                        Ok(p) => p,
                        Err(reason) => {
                            return Outcome::Rejected(Excluded {
                                id: s.id.clone(),
                                reason,
                            })
                        }
                    };
                    if self.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                        return Outcome::Errored(Excluded {
                            id: s.id.clone(),
                            reason: "cancelled".into(),
                        });
                    }
                    // the context never reaches a real endpoint; offline stubs read it
                    let req = ChatRequest::new(&self.cfg.model_id, "", prompt)
                        .temperature(self.cfg.temperature)
                        .top_p(self.cfg.top_p)
                        .max_tokens(self.cfg.max_tokens)
                        .purpose(Purpose::Answer)
                        .context(json!({"sample_id": s.id, "ast_str": s.ast_str}));
                    match self.gateway.chat(&req) {
                        Ok(raw) => Outcome::Scored(score(s, raw, self.cfg.answer_parse_mode)),
                        Err(e) => Outcome::Errored(Excluded {
                            id: s.id.clone(),
                            reason: e.to_string(),
                        }),
                    }
                })
                .collect()
        });
        aggregate(&self.cfg.model_id, task, outcomes)
    }
}

fn score(s: &SampleRecord, raw_output: String, mode: ParseMode) -> ScoredSample {
    let parsed_answer = parse_answer(&raw_output, mode);
    ScoredSample {
        id: s.id.clone(),
        correct: parsed_answer == Some(s.ground_truth_value),
        parsed_answer,
        expected: s.ground_truth_value,
        raw_output,
    }
}

fn aggregate(model: &str, task: EvalTask, outcomes: Vec<Outcome>) -> Result<EvalResult, EvalError> {
    let (mut per_sample, mut errored, mut rejected) = (Vec::new(), Vec::new(), Vec::new());
    for o in outcomes {
        match o {
            Outcome::Scored(s) => per_sample.push(s),
            Outcome::Errored(e) => errored.push(e),
            Outcome::Rejected(e) => rejected.push(e),
        }
    }
    let n = per_sample.len();
    if n == 0 {
        return Err(EvalError::NothingScored {
            errored: errored.len(),
            rejected: rejected.len(),
        });
    }
    let k = per_sample.iter().filter(|s| s.correct).count();
    let (wilson_low, wilson_high) =
        wilson_ci::<f64>(k as u64, n as u64, 1.96).expect("n > 0 and k <= n");
    Ok(EvalResult {
        model: model.to_string(),
        task,
        per_sample,
        errored,
        rejected,
        n,
        k_correct: k,
        accuracy: k as f64 / n as f64,
        wilson_low,
        wilson_high,
    })
}
