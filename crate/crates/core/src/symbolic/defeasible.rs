use std::collections::BTreeSet;

use super::{normalize, singular, LogicError};

/// "all birds can fly" / "penguins cannot fly" as structured data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conclusion {
    pub class: String,
    pub predicate: String,
    pub holds: bool,
}

/// Splits "<subject> can[not] <predicate>" into its parts.
fn split_can(statement: &str) -> Result<(String, String, bool), LogicError> {
    let norm = normalize(statement)
        .replace("can't", "cannot")
        .replace("can not", "cannot");
    let mut words: Vec<&str> = norm.split(' ').collect();
    let mut negated = false;
    match words.first() {
        Some(&"all") | Some(&"every") => {
            words.remove(0);
        }
        Some(&"no") => {
            negated = true;
            words.remove(0);
        }
        _ => {}
    }
    let (i, holds) = match words.iter().position(|w| *w == "can" || *w == "cannot") {
        Some(i) if i > 0 && i + 1 < words.len() => (i, words[i] == "can"),
        _ => return Err(LogicError::Unparseable(statement.to_string())),
    };
    Ok((
        words[..i].join(" "),
        words[i + 1..].join(" "),
        holds != negated,
    ))
}

impl Conclusion {
    pub fn parse(statement: &str) -> Result<Self, LogicError> {
        let (subject, predicate, holds) = split_can(statement)?;
        Ok(Conclusion {
            class: singular(&subject),
            predicate,
            holds,
        })
    }
}

/// "Tweety can fly": does `individual` have `predicate`?
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub statement: String,
    pub individual: String,
    pub predicate: String,
    pub positive: bool,
}

impl Query {
    pub fn parse(statement: &str) -> Result<Self, LogicError> {
        let (individual, predicate, positive) = split_can(statement)?;
        Ok(Query {
            statement: statement.to_string(),
            individual,
            predicate,
            positive,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityRule {
    pub statement: String,
    pub conclusion: Conclusion,
    pub priority: u32,
}

impl PriorityRule {
    pub fn parse(statement: &str, priority: u32) -> Result<Self, LogicError> {
        Ok(PriorityRule {
            statement: statement.to_string(),
            conclusion: Conclusion::parse(statement)?,
            priority,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    /// Membership facts such as "Tweety is a bird".
    pub facts: Vec<String>,
    pub rules: Vec<PriorityRule>,
    pub exceptions: Vec<PriorityRule>,
}

impl KnowledgeBase {
    /// Classes `individual` belongs to according to the facts.
    fn classes_of(&self, individual: &str) -> BTreeSet<String> {
        self.facts
            .iter()
            .filter_map(|f| {
                let norm = normalize(f);
                let words: Vec<&str> = norm.split(' ').collect();
                let is = words.iter().position(|w| *w == "is")?;
                if words[..is].join(" ") != individual {
                    return None;
                }
                let rest = match words.get(is + 1) {
                    Some(&"a") | Some(&"an") => &words[is + 2..],
                    _ => &words[is + 1..],
                };
                (!rest.is_empty()).then(|| singular(&rest.join(" ")))
            })
            .collect()
    }
}

/// Applies rules and exceptions in ascending priority (stable, so list order
/// breaks ties with rules before exceptions); each applicable entry
/// overwrites the current truth value. Returns whether the query holds.
pub fn eval_defeasible(query: &Query, kb: &KnowledgeBase) -> Result<bool, LogicError> {
    if kb.rules.is_empty() && kb.exceptions.is_empty() {
        return Err(LogicError::EmptyKnowledgeBase);
    }
    let mut entries: Vec<&PriorityRule> = kb.rules.iter().chain(&kb.exceptions).collect();
    if let Some(bad) = entries.iter().find(|r| r.priority == 0) {
        return Err(LogicError::NonPositivePriority(bad.statement.clone()));
    }
    entries.sort_by_key(|r| r.priority);

    let classes = kb.classes_of(&query.individual);
    let mut value = None;
    for r in entries {
        if r.conclusion.predicate == query.predicate && classes.contains(&r.conclusion.class) {
            value = Some(r.conclusion.holds);
        }
    }
    value
        .map(|v| v == query.positive)
        .ok_or_else(|| LogicError::QueryUndetermined(query.statement.clone()))
}
