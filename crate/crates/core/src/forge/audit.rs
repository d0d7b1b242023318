//! Post-hoc leakage audits over finished samples.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{GeneratedSample, SceneKind};
use crate::ast::{parse_prefix, AstNode, ParseError};
use crate::llm::mock::scan_large_word_numbers;
use crate::numtext::{
    extract_numbers, validate_intro, validate_padding, validate_scene, Violation,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakFinding {
    pub sample_id: String,
    /// Index into the sample's scenes, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<usize>,
    pub rule: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offending: Option<String>,
}

impl LeakFinding {
    fn from_violation(sample_id: &str, scene: Option<usize>, v: Violation) -> Self {
        LeakFinding {
            sample_id: sample_id.to_string(),
            scene,
            rule: v.rule,
            message: v.message,
            offending: v.offending,
        }
    }
}

/// Intermediate results (root included) that no atom of the tree shares.
/// Such a value has no legitimate reason to appear anywhere in the text.
pub fn hidden_values(ast: &AstNode<i64>) -> BTreeSet<i64> {
    fn atoms(node: &AstNode<i64>, out: &mut BTreeSet<i64>) {
        match node {
            AstNode::Atom(v) => {
                out.insert(*v);
            }
            AstNode::Op(op) => op.children.iter().for_each(|c| atoms(c, out)),
        }
    }
    let mut all_atoms = BTreeSet::new();
    atoms(ast, &mut all_atoms);
    ast.ops_post_order()
        .iter()
        .map(|v| v.node.eval())
        .filter(|v| !all_atoms.contains(v))
        .collect()
}

/// Text-only audit for records without scene detail: flags any mention,
/// including spelled-out values above one hundred, of a hidden value.
pub fn audit_text(
    sample_id: &str,
    text: &str,
    ast_str: &str,
) -> Result<Vec<LeakFinding>, ParseError> {
    let ast: AstNode<i64> = parse_prefix(ast_str)?;
    let hidden = hidden_values(&ast);
    let mut out = Vec::new();
    for m in extract_numbers(text)
        .into_iter()
        .filter(|m| hidden.contains(&m.value))
    {
        out.push(LeakFinding {
            sample_id: sample_id.to_string(),
            scene: None,
            rule: "LEAK".into(),
            message: format!(
                "intermediate result {} stated at char {}",
                m.value, m.char_offset
            ),
            offending: Some(m.surface),
        });
    }
    for (value, surface) in scan_large_word_numbers(text)
        .into_iter()
        .filter(|(v, _)| hidden.contains(v))
    {
        out.push(LeakFinding {
            sample_id: sample_id.to_string(),
            scene: None,
            rule: "LEAK".into(),
            message: format!("intermediate result {value} spelled out"),
            offending: Some(surface),
        });
    }
    Ok(out)
}

/// Scene-level audit: every scene is re-checked against its own contract,
/// then the whole text is swept for hidden values.
pub fn audit_sample(sample: &GeneratedSample) -> Vec<LeakFinding> {
    let id = sample.id.as_str();
    let mut out = Vec::new();
    for (i, scene) in sample.scenes.iter().enumerate() {
        let report = match (scene.kind, &scene.spec) {
            (SceneKind::Intro, _) => validate_intro(&scene.text),
            (SceneKind::Beat, Some(spec)) => match validate_scene(&scene.text, spec) {
                Ok(r) => r,
                Err(e) => {
                    out.push(LeakFinding {
                        sample_id: id.into(),
                        scene: Some(i),
                        rule: "SPEC".into(),
                        message: e.to_string(),
                        offending: None,
                    });
                    continue;
                }
            },
            (SceneKind::Beat, None) => {
                out.push(LeakFinding {
                    sample_id: id.into(),
                    scene: Some(i),
                    rule: "SPEC".into(),
                    message: "beat without a numeric contract".into(),
                    offending: None,
                });
                continue;
            }
            (SceneKind::Padding | SceneKind::Question, _) => validate_padding(&scene.text),
        };
        out.extend(
            report
                .violations
                .into_iter()
                .map(|v| LeakFinding::from_violation(id, Some(i), v)),
        );
    }
    match audit_text(id, &sample.full_text_for_eval, &sample.ast_str) {
        Ok(found) => out.extend(found),
        Err(e) => out.push(LeakFinding {
            sample_id: id.into(),
            scene: None,
            rule: "AST".into(),
            message: e.to_string(),
            offending: None,
        }),
    }
    out
}
