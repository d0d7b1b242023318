use serde_json::json;

use super::{Forge, ForgeError, WorldMeta};
use crate::forge::templates;
use crate::llm::schema::strip_fence;
use crate::llm::{GatewayError, Purpose};

impl Forge<'_> {
    /// Asks for world metadata until a reply parses and validates.
    /// Returns the world and the number of attempts used.
    pub fn generate_world(&self) -> Result<(WorldMeta, u32), ForgeError> {
        let cfg = self.cfg;
        let min = cfg.min_world_chars.to_string();
        let max = cfg.max_world_chars.to_string();
        let prompt = self.prompts.render(
            templates::WORLD,
            &[("min_chars", &min), ("max_chars", &max)],
        )?;
        let budget = cfg.retries.worldgen_retries;
        let mut reason = String::new();
        for attempt in 1..=budget {
            let reply = match self.ask(
                Purpose::World,
                &cfg.model,
                prompt.clone(),
                cfg.temperatures.world,
                self.context(None, json!({"attempt": attempt})),
                None,
            ) {
                Ok(r) => r,
                Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                Err(e) => {
                    reason = e.to_string();
                    continue;
                }
            };
            match serde_json::from_str::<WorldMeta>(strip_fence(&reply)) {
                Ok(w) => match w.validate(cfg) {
                    Ok(()) => return Ok((w, attempt)),
                    Err(e) => reason = e,
                },
                Err(e) => reason = format!("unparseable world JSON: {e}"),
            }
            log::debug!(
                "{}: world attempt {attempt} rejected: {reason}",
                self.sample_id
            );
        }
        Err(ForgeError::World {
            attempts: budget,
            reason,
        })
    }
}
