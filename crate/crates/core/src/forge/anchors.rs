use std::collections::BTreeSet;

use serde_json::json;

use super::{AnchorTable, Forge, ForgeError, WorldMeta};
use crate::ast::AstNode;
use crate::forge::templates;
use crate::llm::{GatewayError, Purpose};
use crate::numtext::extract_numbers;

const OPERATOR_TOKENS: [&str; 4] = ["sum", "min", "max", "median"];

const ADJECTIVES: [&str; 24] = [
    "amber", "silent", "northern", "hidden", "gilded", "drifting", "morning", "hollow", "copper",
    "velvet", "distant", "crimson", "quiet", "western", "sunken", "bright", "winter", "salt",
    "ashen", "golden", "inner", "outer", "upper", "lower",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnchorReject {
    #[error("the model reported it could not find a unique name")]
    UniqueFailure,
    #[error("{0} words; names need 2..={1}")]
    WordCount(usize, usize),
    #[error("contains a number")]
    Number,
    #[error("contains the operator word {0:?}")]
    OperatorToken(String),
    #[error("duplicates an existing name")]
    Duplicate,
}

/// Checks a proposed anchor against the naming rules. `taken` holds
/// lowercase names already assigned.
pub fn check_anchor(
    name: &str,
    taken: &BTreeSet<String>,
    max_words: usize,
) -> Result<(), AnchorReject> {
    if name.trim() == "UNIQUE_FAILURE" {
        return Err(AnchorReject::UniqueFailure);
    }
    let words: Vec<&str> = name.split_whitespace().collect();
    if words.len() < 2 || words.len() > max_words {
        return Err(AnchorReject::WordCount(words.len(), max_words));
    }
    if name.chars().any(|c| c.is_ascii_digit()) || !extract_numbers(name).is_empty() {
        return Err(AnchorReject::Number);
    }
    for token in name.split(|c: char| !c.is_alphanumeric()) {
        let lower = token.to_lowercase();
        if OPERATOR_TOKENS.contains(&lower.as_str()) {
            return Err(AnchorReject::OperatorToken(token.to_string()));
        }
    }
    if taken.contains(&normalize(name)) {
        return Err(AnchorReject::Duplicate);
    }
    Ok(())
}

fn normalize(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Trims quotes and trailing punctuation a model tends to add.
fn clean_proposal(raw: &str) -> String {
    let line = raw.trim().lines().next().unwrap_or("").trim();
    line.trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '`' || c == '.')
        .trim()
        .to_string()
}

/// "the <adjective> <object>" keyed by node id, skipping names already taken.
pub fn deterministic_anchor(
    node_id: usize,
    primary_object: &str,
    taken: &BTreeSet<String>,
    max_words: usize,
) -> String {
    let obj_words: Vec<&str> = primary_object
        .split_whitespace()
        .filter(|w| extract_numbers(w).is_empty())
        .collect();
    // leave room for "the" and up to two adjectives
    let noun = if obj_words.is_empty() {
        "reserve".to_string()
    } else if obj_words.len() + 3 <= max_words {
        obj_words.join(" ")
    } else {
        obj_words[obj_words.len() - 1].to_string()
    };
    let n = ADJECTIVES.len();
    for k in 0..n * n {
        let i = (node_id.saturating_sub(1) + k) % (n * n);
        let adj = if i < n {
            ADJECTIVES[i].to_string()
        } else {
            format!("{} {}", ADJECTIVES[i / n - 1], ADJECTIVES[i % n])
        };
        let name = format!("the {adj} {noun}");
        if check_anchor(&name, taken, max_words).is_ok() {
            return name;
        }
    }
    // only reachable with hundreds of operators
    format!("the last {noun}")
}

impl Forge<'_> {
    /// Names every operator node. Model proposals that break the rules fall
    /// back to deterministic names. Returns the table and the node ids that
    /// needed the fallback.
    pub fn assign_anchors(
        &self,
        ast: &AstNode<i64>,
        world: &WorldMeta,
    ) -> Result<(AnchorTable, Vec<usize>), ForgeError> {
        let cfg = self.cfg;
        let use_llm = cfg.use_narrative_anchors && cfg.use_llm_naming;
        let mut table = AnchorTable::new();
        let mut taken = BTreeSet::new();
        let mut fallbacks = Vec::new();
        for v in ast.ops_post_order() {
            let id = v.node.node_id;
            let mut chosen = None;
            if use_llm {
                let taken_list = if table.is_empty() {
                    "(none yet)".to_string()
                } else {
                    table.values().cloned().collect::<Vec<_>>().join("; ")
                };
                let min_words = "2".to_string();
                let max_words = cfg.max_anchor_words.to_string();
                let prompt = self.prompts.render(
                    templates::ANCHOR,
                    &[
                        ("genre", &world.genre),
                        ("setting", &world.setting),
                        ("primary_object", &world.primary_object),
                        ("op_label", v.node.op.label()),
                        ("min_words", &min_words),
                        ("max_words", &max_words),
                        ("taken", &taken_list),
                    ],
                )?;
                let ctx = self.context(
                    Some(world),
                    json!({"node_id": id, "op": v.node.op.name(), "taken": table.values().collect::<Vec<_>>()}),
                );
                match self.ask(
                    Purpose::Anchor,
                    &cfg.model,
                    prompt,
                    cfg.temperatures.anchor,
                    ctx,
                    None,
                ) {
                    Ok(reply) => {
                        let name = clean_proposal(&reply);
                        match check_anchor(&name, &taken, cfg.max_anchor_words) {
                            Ok(()) => chosen = Some(name),
                            Err(why) => log::debug!(
                                "{}: anchor {name:?} for node {id} rejected: {why}",
                                self.sample_id
                            ),
                        }
                    }
                    Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                    Err(e) => log::debug!(
                        "{}: anchor request for node {id} failed: {e}",
                        self.sample_id
                    ),
                }
            }
            let name = chosen.unwrap_or_else(|| {
                if use_llm {
                    fallbacks.push(id);
                }
                deterministic_anchor(id, &world.primary_object, &taken, cfg.max_anchor_words)
            });
            taken.insert(normalize(&name));
            table.insert(id, name);
        }
        Ok((table, fallbacks))
    }
}
