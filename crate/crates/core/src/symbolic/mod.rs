//! Deterministic evaluators for symbolic reasoning operators: abduction,
//! induction and defeasible queries, with an S-expression surface syntax.
//!
//! ```text
//! (ABDUCE (OBSERVATIONS "lights flicker") (CAUSES (CAUSE "power surge" (simplicity 2) (likelihood 0.8))))
//! (INDUCE (EXAMPLES ("raven A is black")) (RULE_CANDIDATES ("all ravens are black")) (TAXONOMY (ISA "raven" "bird")))
//! (DEFEASIBLE_QUERY (QUERY "Tweety can fly") (KNOWLEDGE_BASE (FACT "Tweety is a bird") (RULE "all birds can fly" (priority 1))))
//! ```
//!
//! The `TAXONOMY` section of `INDUCE` is optional and declares the subclass
//! relation used to rank rule specificity.

mod abduce;
mod defeasible;
mod induce;
pub mod sexpr;

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;

pub use abduce::{eval_abduce, Cause};
pub use defeasible::{eval_defeasible, Conclusion, KnowledgeBase, PriorityRule, Query};
pub use induce::{
    eval_induce, is_consistent, Example, Quantifier, RuleCandidate, RulePattern, Taxonomy,
};
pub use sexpr::{SExpr, SExprError};

/// Exact scores for abduction.
pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogicError {
    #[error("no causes to choose from")]
    NoCauses,
    #[error("cause {0:?} has non-positive simplicity")]
    NonPositiveSimplicity(String),
    #[error("cause {0:?} has likelihood outside [0, 1]")]
    LikelihoodOutOfRange(String),
    #[error("empty name")]
    EmptyName,
    #[error("duplicate entry {0:?}")]
    DuplicateName(String),
    #[error("no rule candidates")]
    NoCandidates,
    #[error("no rule fits")]
    NoRuleFits,
    #[error("knowledge base has no rules or exceptions")]
    EmptyKnowledgeBase,
    #[error("priority of {0:?} must be positive")]
    NonPositivePriority(String),
    #[error("query undetermined: {0:?}")]
    QueryUndetermined(String),
    #[error("cannot parse statement {0:?}")]
    Unparseable(String),
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("malformed {form}: {message}")]
    Malformed { form: &'static str, message: String },
    #[error(transparent)]
    Syntax(#[from] SExprError),
}

/// Lowercased, whitespace-collapsed form used for all pattern matching.
pub(crate) fn normalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Naive English singular for class nouns ("ravens" -> "raven").
pub(crate) fn singular(word: &str) -> String {
    let w = word.trim();
    if let Some(stem) = w.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    match w.strip_suffix('s') {
        Some(stem) if !stem.is_empty() && !stem.ends_with('s') => stem.to_string(),
        _ => w.to_string(),
    }
}

/// Parses "0.8", "2", "-1.25" or "4/5" exactly.
pub fn parse_rational(text: &str) -> Result<Rational, LogicError> {
    let bad = || LogicError::BadNumber(text.to_string());
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| bad())?;
        let d: i64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (negative, digits) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
        || frac.len() > 17
    {
        return Err(bad());
    }
    let den = 10_i64.pow(frac.len() as u32);
    let int_v: i64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let frac_v: i64 = if frac.is_empty() {
        0
    } else {
        frac.parse().map_err(|_| bad())?
    };
    let num = int_v
        .checked_mul(den)
        .and_then(|v| v.checked_add(frac_v))
        .ok_or_else(bad)?;
    Ok(Ratio::new(if negative { -num } else { num }, den))
}

/// Decimal when the value has a finite decimal expansion, else `n/d`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let (n, d) = (*r.numer(), *r.denom());
    let mut scale: i64 = 1;
    for places in 1..=17 {
        scale *= 10;
        if scale % d == 0 {
            let scaled = n.unsigned_abs() as i128 * (scale / d) as i128;
            let int = scaled / scale as i128;
            let frac = scaled % scale as i128;
            let sign = if n < 0 { "-" } else { "" };
            return format!("{sign}{int}.{frac:0places$}");
        }
    }
    format!("{n}/{d}")
}

/// A symbolic reasoning node with its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolicQuery {
    Abduce {
        observations: Vec<String>,
        causes: Vec<Cause>,
    },
    Induce {
        examples: Vec<Example>,
        candidates: Vec<RuleCandidate>,
        taxonomy: Taxonomy,
    },
    Defeasible {
        query: Query,
        kb: KnowledgeBase,
    },
}

/// Ground truth of a symbolic node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SymbolicValue {
    Text(String),
    Bool(bool),
}

impl fmt::Display for SymbolicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicValue::Text(s) => f.write_str(s),
            SymbolicValue::Bool(true) => f.write_str("True"),
            SymbolicValue::Bool(false) => f.write_str("False"),
        }
    }
}

fn malformed<T>(form: &'static str, message: impl Into<String>) -> Result<T, LogicError> {
    Err(LogicError::Malformed {
        form,
        message: message.into(),
    })
}

fn section<'a>(items: &'a [SExpr], name: &str) -> Option<&'a SExpr> {
    items.iter().find(|e| e.head() == Some(name))
}

fn strings_of(form: &'static str, e: &SExpr) -> Result<Vec<String>, LogicError> {
    e.items()[1..]
        .iter()
        .map(|item| match item {
            SExpr::Str(s) | SExpr::Atom(s) => Ok(s.clone()),
            // ("raven A is black") style
            SExpr::List(inner) if inner.len() == 1 => match inner[0].text() {
                Some(s) => Ok(s.to_string()),
                None => malformed(form, "expected a string"),
            },
            _ => malformed(form, "expected a string"),
        })
        .collect()
}

/// `(key value)` lookup inside a list such as `(CAUSE "x" (simplicity 2))`.
fn keyed<'a>(items: &'a [SExpr], key: &str) -> Option<&'a str> {
    items
        .iter()
        .find(|e| e.head() == Some(key))
        .and_then(|e| e.items().get(1))
        .and_then(SExpr::text)
}

fn str_item(s: &str) -> SExpr {
    SExpr::Str(s.to_string())
}

fn atom(s: &str) -> SExpr {
    SExpr::Atom(s.to_string())
}

fn list(items: Vec<SExpr>) -> SExpr {
    SExpr::List(items)
}

impl SymbolicQuery {
    pub fn parse(src: &str) -> Result<Self, LogicError> {
        Self::from_sexpr(&SExpr::parse(src)?)
    }

    pub fn from_sexpr(e: &SExpr) -> Result<Self, LogicError> {
        let items = e.items();
        match e.head() {
            Some("ABDUCE") => {
                let observations = match section(items, "OBSERVATIONS") {
                    Some(o) => strings_of("OBSERVATIONS", o)?,
                    None => Vec::new(),
                };
                let Some(causes_e) = section(items, "CAUSES") else {
                    return malformed("ABDUCE", "missing CAUSES");
                };
                let causes = causes_e.items()[1..]
                    .iter()
                    .map(|c| {
                        if c.head() != Some("CAUSE") {
                            return malformed("CAUSES", "expected CAUSE");
                        }
                        let ci = c.items();
                        let name = ci
                            .get(1)
                            .and_then(SExpr::text)
                            .ok_or(LogicError::EmptyName)?;
                        let simplicity = keyed(ci, "simplicity").map(parse_rational).transpose()?;
                        let likelihood = keyed(ci, "likelihood").map(parse_rational).transpose()?;
                        match (simplicity, likelihood) {
                            (Some(s), Some(l)) => Ok(Cause::new(name, s, l)),
                            _ => malformed(
                                "CAUSE",
                                format!("{name:?} needs simplicity and likelihood"),
                            ),
                        }
                    })
                    .collect::<Result<_, _>>()?;
                Ok(SymbolicQuery::Abduce {
                    observations,
                    causes,
                })
            }
            Some("INDUCE") => {
                let examples = match section(items, "EXAMPLES") {
                    Some(x) => strings_of("EXAMPLES", x)?
                        .iter()
                        .map(|s| Example::parse(s))
                        .collect::<Result<_, _>>()?,
                    None => Vec::new(),
                };
                let Some(cands) = section(items, "RULE_CANDIDATES") else {
                    return malformed("INDUCE", "missing RULE_CANDIDATES");
                };
                let candidates = strings_of("RULE_CANDIDATES", cands)?
                    .iter()
                    .map(|s| RuleCandidate::parse(s))
                    .collect::<Result<_, _>>()?;
                let mut taxonomy = Taxonomy::new();
                if let Some(t) = section(items, "TAXONOMY") {
                    for isa in &t.items()[1..] {
                        match (
                            isa.head(),
                            isa.items().get(1).and_then(SExpr::text),
                            isa.items().get(2).and_then(SExpr::text),
                        ) {
                            (Some("ISA"), Some(c), Some(p)) => taxonomy.add(c, p),
                            _ => return malformed("TAXONOMY", "expected (ISA class superclass)"),
                        }
                    }
                }
                Ok(SymbolicQuery::Induce {
                    examples,
                    candidates,
                    taxonomy,
                })
            }
            Some("DEFEASIBLE_QUERY") => {
                let Some(q) = section(items, "QUERY")
                    .and_then(|q| q.items().get(1))
                    .and_then(SExpr::text)
                else {
                    return malformed("DEFEASIBLE_QUERY", "missing QUERY");
                };
                let query = Query::parse(q)?;
                let Some(kb_e) = section(items, "KNOWLEDGE_BASE") else {
                    return malformed("DEFEASIBLE_QUERY", "missing KNOWLEDGE_BASE");
                };
                let mut kb = KnowledgeBase::default();
                for entry in &kb_e.items()[1..] {
                    let ei = entry.items();
                    let text = ei.get(1).and_then(SExpr::text);
                    let priority = || -> Result<u32, LogicError> {
                        let p = keyed(ei, "priority").ok_or(LogicError::Malformed {
                            form: "KNOWLEDGE_BASE",
                            message: "rule without priority".into(),
                        })?;
                        p.parse().map_err(|_| LogicError::BadNumber(p.to_string()))
                    };
                    match (entry.head(), text) {
                        (Some("FACT"), Some(t)) => kb.facts.push(t.to_string()),
                        (Some("RULE"), Some(t)) => {
                            kb.rules.push(PriorityRule::parse(t, priority()?)?)
                        }
                        (Some("EXCEPTION"), Some(t)) => {
                            kb.exceptions.push(PriorityRule::parse(t, priority()?)?)
                        }
                        _ => {
                            return malformed("KNOWLEDGE_BASE", "expected FACT, RULE or EXCEPTION")
                        }
                    }
                }
                Ok(SymbolicQuery::Defeasible { query, kb })
            }
            _ => malformed("query", "expected ABDUCE, INDUCE or DEFEASIBLE_QUERY"),
        }
    }

    pub fn to_sexpr(&self) -> SExpr {
        match self {
            SymbolicQuery::Abduce {
                observations,
                causes,
            } => {
                let mut obs = vec![atom("OBSERVATIONS")];
                obs.extend(observations.iter().map(|o| str_item(o)));
                let mut cs = vec![atom("CAUSES")];
                cs.extend(causes.iter().map(|c| {
                    list(vec![
                        atom("CAUSE"),
                        str_item(&c.name),
                        list(vec![
                            atom("simplicity"),
                            atom(&format_rational(&c.simplicity)),
                        ]),
                        list(vec![
                            atom("likelihood"),
                            atom(&format_rational(&c.likelihood)),
                        ]),
                    ])
                }));
                list(vec![atom("ABDUCE"), list(obs), list(cs)])
            }
            SymbolicQuery::Induce {
                examples,
                candidates,
                taxonomy,
            } => {
                let mut ex = vec![atom("EXAMPLES")];
                ex.extend(examples.iter().map(|e| list(vec![str_item(&e.statement)])));
                let mut rc = vec![atom("RULE_CANDIDATES")];
                rc.extend(
                    candidates
                        .iter()
                        .map(|c| list(vec![str_item(&c.statement)])),
                );
                let mut out = vec![atom("INDUCE"), list(ex), list(rc)];
                if !taxonomy.is_empty() {
                    let mut t = vec![atom("TAXONOMY")];
                    t.extend(
                        taxonomy
                            .pairs()
                            .map(|(c, p)| list(vec![atom("ISA"), str_item(c), str_item(p)])),
                    );
                    out.push(list(t));
                }
                list(out)
            }
            SymbolicQuery::Defeasible { query, kb } => {
                let mut k = vec![atom("KNOWLEDGE_BASE")];
                k.extend(
                    kb.facts
                        .iter()
                        .map(|f| list(vec![atom("FACT"), str_item(f)])),
                );
                let rule = |head: &str, r: &PriorityRule| {
                    list(vec![
                        atom(head),
                        str_item(&r.statement),
                        list(vec![atom("priority"), atom(&r.priority.to_string())]),
                    ])
                };
                k.extend(kb.rules.iter().map(|r| rule("RULE", r)));
                k.extend(kb.exceptions.iter().map(|r| rule("EXCEPTION", r)));
                list(vec![
                    atom("DEFEASIBLE_QUERY"),
                    list(vec![atom("QUERY"), str_item(&query.statement)]),
                    list(k),
                ])
            }
        }
    }

    pub fn pretty(&self) -> String {
        self.to_sexpr().pretty()
    }

    pub fn eval(&self) -> Result<SymbolicValue, LogicError> {
        match self {
            SymbolicQuery::Abduce {
                observations,
                causes,
            } => {
                let obs: BTreeSet<String> = observations.iter().cloned().collect();
                eval_abduce(&obs, causes).map(SymbolicValue::Text)
            }
            SymbolicQuery::Induce {
                examples,
                candidates,
                taxonomy,
            } => eval_induce(examples, candidates, taxonomy).map(SymbolicValue::Text),
            SymbolicQuery::Defeasible { query, kb } => {
                eval_defeasible(query, kb).map(SymbolicValue::Bool)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rationals_parse_and_print_exactly() {
        assert_eq!(parse_rational("0.8").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_rational("4/5").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_rational("-1.25").unwrap(), Ratio::new(-5, 4));
        assert_eq!(parse_rational(".5").unwrap(), Ratio::new(1, 2));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational(".").is_err());
        assert_eq!(format_rational(&Ratio::new(4, 5)), "0.8");
        assert_eq!(format_rational(&Ratio::new(1, 80)), "0.0125");
        assert_eq!(format_rational(&Ratio::new(-5, 4)), "-1.25");
        assert_eq!(format_rational(&Ratio::new(1, 3)), "1/3");
        assert_eq!(format_rational(&Ratio::new(6, 3)), "2");
    }

    #[test]
    fn singular_forms() {
        assert_eq!(singular("ravens"), "raven");
        assert_eq!(singular("berries"), "berry");
        assert_eq!(singular("glass"), "glass");
        assert_eq!(singular("bird"), "bird");
    }

    const ABDUCE: &str = r#"(ABDUCE
  (OBSERVATIONS "lights flicker" "strange hum")
  (CAUSES
    (CAUSE "power surge" (simplicity 2) (likelihood 0.8))
    (CAUSE "ghost" (simplicity 8) (likelihood 0.1))
  )
)"#;

    const INDUCE: &str = r#"(INDUCE
  (EXAMPLES ("raven A is black") ("raven B is black"))
  (RULE_CANDIDATES ("all birds are black") ("all ravens are black")
                   ("some ravens are black"))
  (TAXONOMY (ISA "raven" "bird"))
)"#;

    const DEFEASIBLE: &str = r#"(DEFEASIBLE_QUERY
  (QUERY "Tweety can fly")
  (KNOWLEDGE_BASE
    (FACT "Tweety is a bird")
    (FACT "Tweety is a penguin")
    (RULE "all birds can fly" (priority 1))
    (EXCEPTION "penguins cannot fly" (priority 2))
  )
)"#;

    #[test]
    fn worked_examples_from_source_text() {
        assert_eq!(
            SymbolicQuery::parse(ABDUCE).unwrap().eval().unwrap(),
            SymbolicValue::Text("power surge".into())
        );
        assert_eq!(
            SymbolicQuery::parse(INDUCE).unwrap().eval().unwrap(),
            SymbolicValue::Text("all ravens are black".into())
        );
        let d = SymbolicQuery::parse(DEFEASIBLE).unwrap().eval().unwrap();
        assert_eq!(d, SymbolicValue::Bool(false));
        assert_eq!(d.to_string(), "False");
    }

    #[test]
    fn pretty_print_round_trips() {
        for src in [ABDUCE, INDUCE, DEFEASIBLE] {
            let q = SymbolicQuery::parse(src).unwrap();
            let printed = q.pretty();
            assert_eq!(SymbolicQuery::parse(&printed).unwrap(), q, "{printed}");
        }
        let printed = SymbolicQuery::parse(ABDUCE).unwrap().pretty();
        assert!(
            printed.contains(r#"(CAUSE "power surge" (simplicity 2) (likelihood 0.8))"#),
            "{printed}"
        );
    }

    #[test]
    fn malformed_queries() {
        assert!(matches!(
            SymbolicQuery::parse("(ABDUCE (OBSERVATIONS))"),
            Err(LogicError::Malformed { .. })
        ));
        assert!(matches!(
            SymbolicQuery::parse("(FOO)"),
            Err(LogicError::Malformed { .. })
        ));
        assert!(matches!(
            SymbolicQuery::parse(
                r#"(ABDUCE (CAUSES (CAUSE "x" (simplicity two) (likelihood 0.1))))"#
            ),
            Err(LogicError::BadNumber(_))
        ));
        assert!(matches!(
            SymbolicQuery::parse("(ABDUCE"),
            Err(LogicError::Syntax(_))
        ));
    }
}
