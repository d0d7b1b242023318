use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::{
    parse_verdict, verdict_schema, AnchorTable, CheckStage, Forge, ForgeError, RevisionEntry,
    SceneKind, SceneRecord, WorldMeta,
};
use crate::ast::{AstNode, OpNode};
use crate::forge::templates;
use crate::llm::{GatewayError, Purpose};
use crate::numtext::{validate_intro, validate_scene, Allowance, BeatSpec, ValidationReport};

/// Numeric contract for the beat of `node`.
///
/// The node's result and every earlier intermediate result are forbidden,
/// except values the node itself takes as atomic inputs: those are pinned
/// to their exact required count instead, which still rules out restating
/// them as the outcome.
pub fn build_beat_spec(node: &OpNode<i64>, tree: &AstNode<i64>, anchors: &AnchorTable) -> BeatSpec {
    let mut required_atomics = BTreeMap::new();
    for v in node.atom_children() {
        *required_atomics.entry(v).or_insert(0) += 1;
    }
    let required_anchors: BTreeSet<String> = node
        .op_children()
        .map(|c| {
            anchors
                .get(&c.node_id)
                .cloned()
                .or_else(|| c.anchor_name.clone())
                .unwrap_or_default()
        })
        .filter(|a| !a.is_empty())
        .collect();
    let mut forbidden_values: BTreeSet<i64> = tree
        .ops_post_order()
        .iter()
        .filter(|v| v.node.node_id < node.node_id)
        .map(|v| v.node.eval())
        .collect();
    forbidden_values.insert(node.eval());
    forbidden_values.retain(|v| !required_atomics.contains_key(v));
    BeatSpec {
        required_atomics,
        required_anchors,
        forbidden_values,
        allowance: Allowance::Beat,
    }
}

fn describe_inputs(spec: &BeatSpec) -> String {
    let mut lines: Vec<String> = spec
        .required_atomics
        .iter()
        .map(|(v, n)| {
            if *n == 1 {
                format!("- the quantity {v}, mentioned once")
            } else {
                format!("- the quantity {v}, mentioned {n} times")
            }
        })
        .collect();
    lines.extend(
        spec.required_anchors
            .iter()
            .map(|a| format!("- the earlier result named \"{a}\"")),
    );
    lines.join("\n")
}

fn join_or_none<I: IntoIterator<Item = String>>(items: I) -> String {
    let v: Vec<String> = items.into_iter().collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(", ")
    }
}

impl Forge<'_> {
    pub fn generate_intro(&self, world: &WorldMeta) -> Result<(SceneRecord, u32), ForgeError> {
        let cfg = self.cfg;
        let roster = world.roster();
        let prompt = self.prompts.render(
            templates::INTRO,
            &[
                ("genre", &world.genre),
                ("setting", &world.setting),
                ("primary_object", &world.primary_object),
                ("characters", &roster),
            ],
        )?;
        let budget = cfg.retries.intro_retries;
        let mut reason = String::new();
        for attempt in 1..=budget {
            let ctx = self.context(Some(world), json!({"attempt": attempt}));
            let text = match self.ask(
                Purpose::Intro,
                &cfg.model,
                prompt.clone(),
                cfg.temperatures.creative,
                ctx,
                None,
            ) {
                Ok(t) => t.trim().to_string(),
                Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                Err(e) => {
                    reason = e.to_string();
                    continue;
                }
            };
            let report = validate_intro(&text);
            if report.is_valid && !text.is_empty() {
                let tokens = self.tokens(&text);
                let scene = SceneRecord {
                    kind: SceneKind::Intro,
                    node_id: None,
                    text,
                    spec: None,
                    revision_log: vec![],
                    tokens,
                };
                return Ok((scene, attempt));
            }
            reason = if text.is_empty() {
                "empty intro".into()
            } else {
                report.explanation_for_audit
            };
        }
        Err(ForgeError::Intro {
            attempts: budget,
            reason,
        })
    }

    /// Writes the beat for `node`: draft, then critic verdicts with
    /// revisions, then the static check. The whole cycle is repeated up to
    /// the beat budget before the sample is abandoned.
    pub fn generate_beat(
        &self,
        node: &OpNode<i64>,
        tree: &AstNode<i64>,
        world: &WorldMeta,
        anchors: &AnchorTable,
        context_snippet: &str,
    ) -> Result<SceneRecord, ForgeError> {
        let cfg = self.cfg;
        let spec = build_beat_spec(node, tree, anchors);
        let anchor = anchors.get(&node.node_id).cloned().unwrap_or_default();
        let roster = world.roster();
        let inputs = describe_inputs(&spec);
        let prompt = self.prompts.render(
            templates::BEAT,
            &[
                ("genre", &world.genre),
                ("setting", &world.setting),
                ("primary_object", &world.primary_object),
                ("characters", &roster),
                ("context_snippet", context_snippet),
                ("op_label", node.op.label()),
                ("inputs", &inputs),
                ("anchor", &anchor),
            ],
        )?;
        let required = join_or_none(
            spec.required_atomics
                .iter()
                .map(|(v, n)| format!("{v}: {n}")),
        );
        let anchor_list = join_or_none(spec.required_anchors.iter().map(|a| format!("\"{a}\"")));
        let forbidden = join_or_none(spec.forbidden_values.iter().map(i64::to_string));
        let ctx = |extra: serde_json::Value| {
            let mut c = self.context(
                Some(world),
                json!({
                    "node_id": node.node_id,
                    "op": node.op.name(),
                    "anchor": anchor,
                    "spec": spec,
                    "ast_str": tree.to_prefix(),
                }),
            );
            if let serde_json::Value::Object(m) = extra {
                for (k, v) in m {
                    c[k] = v;
                }
            }
            c
        };

        let mut log = Vec::new();
        let mut reason = String::new();
        for attempt in 1..=cfg.retries.beat_retries {
            let mut draft = match self.ask(
                Purpose::Beat,
                &cfg.model,
                prompt.clone(),
                cfg.temperatures.beat,
                ctx(json!({"attempt": attempt})),
                None,
            ) {
                Ok(t) => t.trim().to_string(),
                Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                Err(e) => {
                    reason = e.to_string();
                    continue;
                }
            };
            let mut approved = false;
            for iteration in 1..=cfg.retries.llm_validation_iterations {
                let critic_prompt = self.prompts.render(
                    templates::CRITIC,
                    &[
                        ("op_label", node.op.label()),
                        ("required", &required),
                        ("anchors", &anchor_list),
                        ("forbidden", &forbidden),
                        ("draft", &draft),
                    ],
                )?;
                let verdict = match self.ask(
                    Purpose::Critic,
                    &cfg.validator_model,
                    critic_prompt,
                    cfg.temperatures.validator,
                    ctx(json!({"attempt": attempt, "iteration": iteration, "draft": draft})),
                    Some(verdict_schema()),
                ) {
                    Ok(json) => parse_verdict(&json).unwrap_or_else(|e| unusable_verdict(&e)),
                    Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                    Err(e) => unusable_verdict(&e.to_string()),
                };
                let ok = verdict.is_valid;
                let feedback = verdict.explanation_for_generator.clone();
                log.push(RevisionEntry {
                    attempt,
                    iteration,
                    stage: CheckStage::Critic,
                    verdict,
                });
                if ok {
                    approved = true;
                    break;
                }
                reason = format!("critic: {feedback}");
                if iteration == cfg.retries.llm_validation_iterations {
                    break;
                }
                let rules = format!(
                    "Mention exactly: {required}. Refer by name to: {anchor_list}. Never state: {forbidden}. No other numbers. Name the outcome \"{anchor}\"."
                );
                let revision_prompt = self.prompts.render(
                    templates::REVISION,
                    &[
                        ("feedback", &feedback),
                        ("draft", &draft),
                        ("rules", &rules),
                    ],
                )?;
                draft = match self.ask(
                    Purpose::Revision,
                    &cfg.model,
                    revision_prompt,
                    cfg.temperatures.revision,
                    ctx(json!({"attempt": attempt, "iteration": iteration, "draft": draft, "feedback": feedback})),
                    None,
                ) {
                    Ok(t) => t.trim().to_string(),
                    Err(e @ GatewayError::Transport { .. }) => return Err(e.into()),
                    Err(_) => draft,
                };
            }
            if !approved {
                continue;
            }
            let report =
                validate_scene(&draft, &spec).map_err(|e| ForgeError::Config(e.to_string()))?;
            if report.is_valid {
                let tokens = self.tokens(&draft);
                return Ok(SceneRecord {
                    kind: SceneKind::Beat,
                    node_id: Some(node.node_id),
                    text: draft,
                    spec: Some(spec),
                    revision_log: log,
                    tokens,
                });
            }
            reason = format!("static check: {}", report.explanation_for_audit);
            let iteration = log.last().map_or(0, |e| e.iteration);
            log.push(RevisionEntry {
                attempt,
                iteration,
                stage: CheckStage::Static,
                verdict: report,
            });
        }
        Err(ForgeError::Beat {
            node_id: node.node_id,
            attempts: cfg.retries.beat_retries,
            reason,
        })
    }
}

/// A critic reply that could not be used counts as a rejection.
fn unusable_verdict(why: &str) -> ValidationReport {
    ValidationReport::from_verdict(
        false,
        format!("The reviewer reply was unusable ({why}); rewrite the scene carefully."),
        String::new(),
        vec![],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_prefix;

    fn spec_for(src: &str, id: usize) -> BeatSpec {
        let tree: AstNode<i64> = parse_prefix(src).unwrap();
        let anchors: AnchorTable = tree
            .ops_post_order()
            .iter()
            .map(|v| (v.node.node_id, format!("anchor {}", v.node.node_id)))
            .collect();
        build_beat_spec(tree.find_op(id).unwrap(), &tree, &anchors)
    }

    #[test]
    fn simple_sum() {
        let s = spec_for("[SUM 2 1]", 1);
        assert_eq!(s.required_atomics, [(1, 1), (2, 1)].into_iter().collect());
        assert_eq!(s.forbidden_values, [3].into_iter().collect());
        assert!(s.required_anchors.is_empty());
    }

    #[test]
    fn result_colliding_with_input_is_not_banned() {
        // inner SUM = 3, outer MAX(3, 4) = 4
        let s = spec_for("[MAX [SUM 1 2] 4]", 2);
        assert_eq!(s.required_atomics, [(4, 1)].into_iter().collect());
        assert_eq!(
            s.required_anchors,
            ["anchor 1".to_string()].into_iter().collect()
        );
        assert_eq!(s.forbidden_values, [3].into_iter().collect());
        assert!(s.check().is_ok());
    }

    #[test]
    fn duplicate_atoms_are_a_multiset() {
        let s = spec_for("[SUM 5 5 1 2]", 1);
        assert_eq!(s.required_atomics[&5], 2);
        assert_eq!(s.forbidden_values, [13].into_iter().collect());
    }

    #[test]
    fn earlier_results_forbidden_later_ones_not() {
        // post-order: [MIN 4 9]=4 is 1, [SUM 10 20]=30 is 2, root is 3
        let s = spec_for("[MAX [MIN 4 9] [SUM 10 20] 7]", 2);
        assert_eq!(s.forbidden_values, [4, 30].into_iter().collect());
        let root = spec_for("[MAX [MIN 4 9] [SUM 10 20] 7]", 3);
        assert_eq!(root.forbidden_values, [4, 30].into_iter().collect());
        assert_eq!(root.required_anchors.len(), 2);
    }
}
