use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::padding::slot_budget;
use super::{
    parse_verdict, tail_chars, verdict_schema, AnchorTable, Forge, ForgeError, GenConfig,
    SceneKind, SceneRecord, WorldMeta,
};
use crate::ast::{sample_ast, AstNode};
use crate::forge::templates::{self, PromptSet};
use crate::llm::{ChatRequest, Gateway, GatewayError, Purpose};
use crate::numtext::ValidationReport;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryCounts {
    pub world_attempts: u32,
    pub intro_attempts: u32,
    /// node_id -> outer attempts used
    pub beat_attempts: BTreeMap<usize, u32>,
    pub critic_iterations: u32,
    pub padding_rejections: u32,
    pub anchor_fallbacks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolisticStatus {
    NotRun,
    Passed,
    Rejected,
    /// The validator could not be reached.
    Unvalidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetadata {
    pub config: GenConfig,
    pub encoding_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub elapsed_ms: u64,
    pub retries: RetryCounts,
    pub padding_paragraphs: usize,
    pub padding_tokens: usize,
    pub holistic: HolisticStatus,
}

/// Everything produced for one sample; the dataset tiers are projections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub id: String,
    pub ast_str: String,
    pub ground_truth_value: i64,
    pub num_operations: usize,
    /// Narrative body only; the question is excluded.
    pub token_count_narrative: usize,
    pub full_text_for_eval: String,
    pub world: WorldMeta,
    pub anchors: AnchorTable,
    /// Scenes in narrative order, ending with the question.
    pub scenes: Vec<SceneRecord>,
    pub metadata: GenerationMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holistic_report: Option<ValidationReport>,
}

fn join_body(scenes: &[SceneRecord]) -> String {
    scenes
        .iter()
        .filter(|s| s.kind != SceneKind::Question)
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n")
}

impl Forge<'_> {
    /// Generates one complete sample, or the reason it was abandoned.
    pub fn assemble_sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> Result<GeneratedSample, ForgeError> {
        let cfg = self.cfg;
        cfg.validate().map_err(ForgeError::Config)?;
        let started = Instant::now();
        let mut ast: AstNode<i64> =
            sample_ast(&cfg.tree, rng).map_err(|e| ForgeError::Config(e.to_string()))?;
        let ground_truth = ast.eval();
        let mut retries = RetryCounts::default();

        let (world, world_attempts) = self.generate_world()?;
        retries.world_attempts = world_attempts;
        let (anchors, fallbacks) = self.assign_anchors(&ast, &world)?;
        retries.anchor_fallbacks = fallbacks;
        ast.set_anchor_names(&anchors);

        let question = self.prompts.render(
            templates::FINAL_QUESTION,
            &[("primary_object", &world.primary_object)],
        )?;
        let question_tokens = self.tokens(&question);
        let limit = cfg.max_total_tokens - cfg.tokens_buffer;

        let (intro, intro_attempts) = self.generate_intro(&world)?;
        retries.intro_attempts = intro_attempts;
        let mut scenes = vec![intro];

        let ops = ast.ops_post_order();
        let n = ops.len();
        let mut beat_tokens = 0;
        let mut padding_tokens = 0;
        let mut padding_paragraphs = 0;
        for (i, v) in ops.iter().enumerate() {
            let snippet = tail_chars(
                &scenes.last().expect("intro exists").text,
                cfg.context_snippet_chars,
            )
            .to_string();
            let beat = self.generate_beat(v.node, &ast, &world, &anchors, &snippet)?;
            let attempts = beat.revision_log.last().map_or(1, |e| e.attempt);
            retries.beat_attempts.insert(v.node.node_id, attempts);
            retries.critic_iterations += beat
                .revision_log
                .iter()
                .filter(|e| e.stage == super::CheckStage::Critic)
                .count() as u32;
            beat_tokens += beat.tokens;
            scenes.push(beat);

            let pending_beats = n - i - 1;
            if pending_beats == 0 {
                // never pad after the root
                break;
            }
            // keep room for the beats still to come, estimated from the ones so far
            let reserve = beat_tokens / (i + 1) * pending_beats;
            let so_far = self.tokens(&join_body(&scenes)) + question_tokens;
            let remaining = limit.saturating_sub(so_far + reserve);
            let budget = slot_budget(remaining, cfg.padding_max_tok_percent, pending_beats);
            let snippet = tail_chars(
                &scenes.last().expect("beat exists").text,
                cfg.context_snippet_chars,
            )
            .to_string();
            let (paragraphs, rejected) = self.generate_padding(&world, budget, i + 1, &snippet)?;
            retries.padding_rejections += rejected;
            padding_paragraphs += paragraphs.len();
            padding_tokens += paragraphs.iter().map(|p| p.tokens).sum::<usize>();
            scenes.extend(paragraphs);
        }

        let body = join_body(&scenes);
        let full_text = format!("{body}{question}");
        let total = self.tokens(&full_text);
        if total > cfg.max_total_tokens {
            return Err(ForgeError::Budget {
                tokens: total,
                limit: cfg.max_total_tokens,
            });
        }
        let token_count_narrative = self.tokens(&body);
        scenes.push(SceneRecord {
            kind: SceneKind::Question,
            node_id: None,
            text: question,
            spec: None,
            revision_log: vec![],
            tokens: question_tokens,
        });
        let ast_str = ast.to_prefix();

        let mut holistic = HolisticStatus::NotRun;
        let mut holistic_report = None;
        if cfg.holistic_inline {
            match holistic_validate(
                self.gateway,
                cfg,
                self.prompts,
                &self.sample_id,
                &full_text,
                &ast_str,
            ) {
                Ok(report) if report.is_valid => {
                    holistic = HolisticStatus::Passed;
                    holistic_report = Some(report);
                }
                Ok(report) => return Err(ForgeError::Holistic(report.explanation_for_audit)),
                Err(e) => {
                    log::warn!("{}: holistic validation unavailable: {e}", self.sample_id);
                    holistic = HolisticStatus::Unvalidated;
                }
            }
        }

        Ok(GeneratedSample {
            id: self.sample_id.clone(),
            ast_str,
            ground_truth_value: ground_truth,
            num_operations: n,
            token_count_narrative,
            full_text_for_eval: full_text,
            world,
            anchors,
            scenes,
            metadata: GenerationMetadata {
                config: cfg.clone(),
                encoding_id: self.counter.encoding_id().to_string(),
                seed: None,
                elapsed_ms: started.elapsed().as_millis() as u64,
                retries,
                padding_paragraphs,
                padding_tokens,
                holistic,
            },
            holistic_report,
        })
    }
}

/// Whole-sample audit by a validator model, checking every step of the
/// narrative against the tree.
pub fn holistic_validate(
    gateway: &Gateway,
    cfg: &GenConfig,
    prompts: &PromptSet,
    sample_id: &str,
    full_text: &str,
    ast_str: &str,
) -> Result<ValidationReport, GatewayError> {
    let prompt = prompts
        .render(
            templates::HOLISTIC,
            &[("ast_str", ast_str), ("narrative", full_text)],
        )
        .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
    let req = ChatRequest::new(&cfg.holistic_model, "", prompt)
        .temperature(cfg.temperatures.validator)
        .max_tokens(cfg.max_api_tokens)
        .purpose(Purpose::Holistic)
        .schema(verdict_schema())
        .context(json!({"sample_id": sample_id, "narrative": full_text, "ast_str": ast_str}));
    let reply = gateway.chat(&req)?;
    parse_verdict(&reply).map_err(|reason| GatewayError::MalformedResponse {
        attempts: 1,
        reason,
    })
}
