//! Prompt templates with `$name` / `${name}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder ${name}")]
    Missing { template: String, name: String },
    #[error("template {template}: cannot read override: {message}")]
    Io { template: String, message: String },
}

/// Replaces `$name` and `${name}`; `$$` is a literal dollar sign.
pub fn fill(
    template_name: &str,
    text: &str,
    vars: &[(&str, &str)],
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let after = &rest[i + 1..];
        if let Some(tail) = after.strip_prefix('$') {
            out.push('$');
            rest = tail;
            continue;
        }
        let (name, tail) = if let Some(braced) = after.strip_prefix('{') {
            match braced.find('}') {
                Some(end) => (&braced[..end], &braced[end + 1..]),
                None => ("", after),
            }
        } else {
            let end = after
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                .unwrap_or(after.len());
            (&after[..end], &after[end..])
        };
        if name.is_empty() {
            out.push('$');
            rest = after;
            continue;
        }
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::Missing {
                template: template_name.to_string(),
                name: name.to_string(),
            })?;
        out.push_str(value);
        rest = tail;
    }
    out.push_str(rest);
    Ok(out)
}

pub const WORLD: &str = "world";
pub const ANCHOR: &str = "anchor";
pub const INTRO: &str = "intro";
pub const BEAT: &str = "beat";
pub const CRITIC: &str = "critic";
pub const REVISION: &str = "revision";
pub const PADDING: &str = "padding";
pub const HOLISTIC: &str = "holistic";
pub const FINAL_QUESTION: &str = "final_question";
pub const BARE_LISTOPS: &str = "bare_listops";

const BUILTIN: [(&str, &str); 10] = [
    (WORLD, include_str!("../../templates/world.txt")),
    (ANCHOR, include_str!("../../templates/anchor.txt")),
    (INTRO, include_str!("../../templates/intro.txt")),
    (BEAT, include_str!("../../templates/beat.txt")),
    (CRITIC, include_str!("../../templates/critic.txt")),
    (REVISION, include_str!("../../templates/revision.txt")),
    (PADDING, include_str!("../../templates/padding.txt")),
    (HOLISTIC, include_str!("../../templates/holistic.txt")),
    (
        FINAL_QUESTION,
        include_str!("../../templates/final_question.txt"),
    ),
    (
        BARE_LISTOPS,
        include_str!("../../templates/bare_listops.txt"),
    ),
];

/// The prompt set used by a run. Built-ins can be overridden per file from
/// a directory of `<name>.txt` files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, String>,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl PromptSet {
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for (name, _) in BUILTIN {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    template: name.to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(name.to_string(), text);
            }
        }
        Ok(set)
    }

    pub fn raw(&self, name: &str) -> &str {
        self.templates.get(name).map(String::as_str).unwrap_or("")
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        fill(name, self.raw(name), vars)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fills_both_placeholder_styles() {
        let s = fill("t", "a $x b ${y}c $$5 $", &[("x", "1"), ("y", "2")]).unwrap();
        assert_eq!(s, "a 1 b 2c $5 $");
        assert_eq!(
            fill("t", "$nope", &[]).unwrap_err(),
            TemplateError::Missing {
                template: "t".into(),
                name: "nope".into()
            }
        );
    }

    #[test]
    fn final_question_is_exact() {
        let q = PromptSet::default()
            .render(FINAL_QUESTION, &[("primary_object", "etherium crystals")])
            .unwrap();
        assert_eq!(
            q,
            "\n\n---\n\n**Question:** The story describes a sequence of operations that modify a quantifiable \
             measure related to 'etherium crystals'. Following this entire sequence, what is the final, precise \
             numerical value of this measure at the conclusion of all activities? Provide only the single integer."
        );
    }

    #[test]
    fn every_builtin_is_non_empty() {
        let set = PromptSet::default();
        for (name, _) in BUILTIN {
            assert!(!set.raw(name).trim().is_empty(), "{name}");
        }
    }
}
