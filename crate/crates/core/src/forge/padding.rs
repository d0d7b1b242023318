use serde_json::json;

use super::{Forge, ForgeError, SceneKind, SceneRecord, WorldMeta};
use crate::forge::templates;
use crate::llm::{GatewayError, Purpose};
use crate::numtext::validate_padding;

/// Paragraphs smaller than this are not worth a request.
const MIN_PARAGRAPH_TOKENS: usize = 20;

/// Budget for one padding slot: an even share of the capped remainder,
/// never more than what is left.
pub fn slot_budget(remaining: usize, percent: f64, remaining_slots: usize) -> usize {
    if remaining_slots == 0 {
        return 0;
    }
    let share = (remaining as f64 * percent / remaining_slots as f64).floor() as usize;
    share.min(remaining)
}

impl Forge<'_> {
    /// Fills one slot with number-free paragraphs totalling at most
    /// `budget_tokens`. A paragraph that keeps failing validation ends the
    /// slot early; padding is optional, so this never aborts the sample.
    /// Returns the paragraphs and the number of rejected drafts.
    pub fn generate_padding(
        &self,
        world: &WorldMeta,
        budget_tokens: usize,
        slot: usize,
        context_snippet: &str,
    ) -> Result<(Vec<SceneRecord>, u32), ForgeError> {
        let cfg = self.cfg;
        let roster = world.roster();
        let mut out: Vec<SceneRecord> = Vec::new();
        let mut used = 0;
        let mut rejected = 0;
        let mut snippet = context_snippet.to_string();
        while out.len() < cfg.max_pad_paragraphs {
            let left = budget_tokens - used;
            if left < MIN_PARAGRAPH_TOKENS {
                break;
            }
            let target = left.min(cfg.pad_paragraph_tokens);
            let target_words = (target * 3 / 4).max(1).to_string();
            let prompt = self.prompts.render(
                templates::PADDING,
                &[
                    ("genre", &world.genre),
                    ("setting", &world.setting),
                    ("primary_object", &world.primary_object),
                    ("characters", &roster),
                    ("context_snippet", &snippet),
                    ("target_words", &target_words),
                ],
            )?;
            let mut accepted = None;
            for attempt in 1..=cfg.retries.pad_retries {
                let ctx = self.context(
                    Some(world),
                    json!({"slot": slot, "paragraph": out.len(), "attempt": attempt, "target_tokens": target}),
                );
                let text = match self.ask(
                    Purpose::Padding,
                    &cfg.model,
                    prompt.clone(),
                    cfg.temperatures.creative,
                    ctx,
                    None,
                ) {
                    Ok(t) => t.trim().to_string(),
                    Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                    Err(_) => String::new(),
                };
                let tokens = self.tokens(&text);
                if !text.is_empty() && tokens <= left && validate_padding(&text).is_valid {
                    accepted = Some((text, tokens));
                    break;
                }
                rejected += 1;
            }
            let Some((text, tokens)) = accepted else {
                log::warn!(
                    "{}: padding slot {slot} skipped after {} failed drafts",
                    self.sample_id,
                    cfg.retries.pad_retries
                );
                break;
            };
            used += tokens;
            snippet = super::tail_chars(&text, cfg.context_snippet_chars).to_string();
            out.push(SceneRecord {
                kind: SceneKind::Padding,
                node_id: None,
                text,
                spec: None,
                revision_log: vec![],
                tokens,
            });
        }
        Ok((out, rejected))
    }
}
