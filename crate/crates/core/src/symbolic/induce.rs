use std::collections::{BTreeMap, BTreeSet};

use super::{normalize, singular, LogicError};

/// Explicit subclass relation between subject classes ("raven" is-a "bird").
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    parents: BTreeMap<String, BTreeSet<String>>,
}

impl Taxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, class: &str, superclass: &str) -> Self {
        self.add(class, superclass);
        self
    }

    pub fn add(&mut self, class: &str, superclass: &str) {
        self.parents
            .entry(class_key(class))
            .or_default()
            .insert(class_key(superclass));
    }

    /// Pairs in insertion-independent order, as given to [`Taxonomy::add`].
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents
            .iter()
            .flat_map(|(c, ps)| ps.iter().map(move |p| (c.as_str(), p.as_str())))
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    /// Reflexive, transitive subclass test.
    pub fn is_subclass(&self, class: &str, of: &str) -> bool {
        let (class, of) = (class_key(class), class_key(of));
        let mut stack = vec![class];
        let mut seen = BTreeSet::new();
        while let Some(c) = stack.pop() {
            if c == of {
                return true;
            }
            if seen.insert(c.clone()) {
                if let Some(ps) = self.parents.get(&c) {
                    stack.extend(ps.iter().cloned());
                }
            }
        }
        false
    }

    fn strictly_narrower(&self, a: &str, b: &str) -> bool {
        self.is_subclass(a, b) && !self.is_subclass(b, a)
    }
}

fn class_key(class: &str) -> String {
    singular(&normalize(class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantifier {
    All,
    Some,
}

/// Structured content of a rule statement such as "all ravens are black".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RulePattern {
    pub quantifier: Quantifier,
    pub subject_class: String,
    pub property: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleCandidate {
    pub statement: String,
    pub pattern: RulePattern,
}

impl RuleCandidate {
    /// Parses "all <class> are <property>" or "some <class> are <property>".
    pub fn parse(statement: &str) -> Result<Self, LogicError> {
        let norm = normalize(statement);
        let words: Vec<&str> = norm.split(' ').collect();
        let are = words.iter().position(|w| *w == "are" || *w == "is");
        let (quantifier, class_words, property) = match (words.first(), are) {
            (Some(&"all"), Some(i)) | (Some(&"every"), Some(i)) if i > 1 && i + 1 < words.len() => {
                (Quantifier::All, &words[1..i], words[i + 1..].join(" "))
            }
            (Some(&"some"), Some(i)) if i > 1 && i + 1 < words.len() => {
                (Quantifier::Some, &words[1..i], words[i + 1..].join(" "))
            }
            _ => return Err(LogicError::Unparseable(statement.to_string())),
        };
        Ok(RuleCandidate {
            statement: statement.to_string(),
            pattern: RulePattern {
                quantifier,
                subject_class: singular(&class_words.join(" ")),
                property,
            },
        })
    }
}

/// One observed individual: "raven A is black".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub statement: String,
    pub class: String,
    pub individual: String,
    pub property: String,
}

impl Example {
    pub fn parse(statement: &str) -> Result<Self, LogicError> {
        let norm = normalize(statement);
        let words: Vec<&str> = norm.split(' ').collect();
        match words.iter().position(|w| *w == "is") {
            Some(i) if i >= 2 && i + 1 < words.len() => Ok(Example {
                statement: statement.to_string(),
                class: singular(&words[..i - 1].join(" ")),
                individual: words[i - 1].to_string(),
                property: words[i + 1..].join(" "),
            }),
            _ => Err(LogicError::Unparseable(statement.to_string())),
        }
    }
}

/// Whether `candidate` holds on every example under `taxonomy`.
///
/// Properties of one individual are exclusive: "sparrow C is brown"
/// contradicts "all birds are black" when sparrows are birds. An existential
/// rule needs a witness once any member of its class has been observed.
pub fn is_consistent(candidate: &RulePattern, examples: &[Example], taxonomy: &Taxonomy) -> bool {
    let members: Vec<&Example> = examples
        .iter()
        .filter(|e| taxonomy.is_subclass(&e.class, &candidate.subject_class))
        .collect();
    match candidate.quantifier {
        Quantifier::All => members.iter().all(|e| e.property == candidate.property),
        Quantifier::Some => {
            members.is_empty() || members.iter().any(|e| e.property == candidate.property)
        }
    }
}

/// Most specific candidate consistent with all examples. A candidate is more
/// specific than another when its subject class is a strict subclass of the
/// other's. Among equally specific (or incomparable) survivors the first
/// listed wins.
pub fn eval_induce(
    examples: &[Example],
    candidates: &[RuleCandidate],
    taxonomy: &Taxonomy,
) -> Result<String, LogicError> {
    if candidates.is_empty() {
        return Err(LogicError::NoCandidates);
    }
    let mut seen = BTreeSet::new();
    for c in candidates {
        if !seen.insert(normalize(&c.statement)) {
            return Err(LogicError::DuplicateName(c.statement.clone()));
        }
    }
    let consistent: Vec<&RuleCandidate> = candidates
        .iter()
        .filter(|c| is_consistent(&c.pattern, examples, taxonomy))
        .collect();
    consistent
        .iter()
        .find(|c| {
            !consistent.iter().any(|o| {
                taxonomy.strictly_narrower(&o.pattern.subject_class, &c.pattern.subject_class)
            })
        })
        .map(|c| c.statement.clone())
        .ok_or(LogicError::NoRuleFits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(list: &[&str]) -> Vec<Example> {
        list.iter().map(|s| Example::parse(s).unwrap()).collect()
    }

    fn cands(list: &[&str]) -> Vec<RuleCandidate> {
        list.iter()
            .map(|s| RuleCandidate::parse(s).unwrap())
            .collect()
    }

    fn birds() -> Taxonomy {
        Taxonomy::new()
            .with("raven", "bird")
            .with("sparrow", "bird")
    }

    #[test]
    fn parses_statements() {
        let c = RuleCandidate::parse("All  Ravens are black").unwrap();
        assert_eq!(
            c.pattern,
            RulePattern {
                quantifier: Quantifier::All,
                subject_class: "raven".into(),
                property: "black".into()
            }
        );
        let e = Example::parse("raven A is black").unwrap();
        assert_eq!(
            (e.class.as_str(), e.individual.as_str(), e.property.as_str()),
            ("raven", "a", "black")
        );
        assert!(RuleCandidate::parse("ravens black").is_err());
        assert!(Example::parse("black").is_err());
    }

    #[test]
    fn ravens_example() {
        let examples = ex(&["raven A is black", "raven B is black"]);
        let c = cands(&[
            "all birds are black",
            "all ravens are black",
            "some ravens are black",
        ]);
        assert_eq!(
            eval_induce(&examples, &c, &birds()).unwrap(),
            "all ravens are black"
        );
    }

    #[test]
    fn single_consistent_candidate() {
        let examples = ex(&["raven A is black"]);
        let c = cands(&["all ravens are black"]);
        assert_eq!(
            eval_induce(&examples, &c, &birds()).unwrap(),
            "all ravens are black"
        );
    }

    #[test]
    fn counterexample_rules_out_general_rule() {
        let examples = ex(&["raven A is black", "sparrow C is brown"]);
        let c = cands(&["all birds are black", "all ravens are black"]);
        // brute force: birds rule is contradicted by the sparrow, ravens rule is not
        let t = birds();
        assert!(!is_consistent(&c[0].pattern, &examples, &t));
        assert!(is_consistent(&c[1].pattern, &examples, &t));
        assert_eq!(
            eval_induce(&examples, &c, &t).unwrap(),
            "all ravens are black"
        );
    }

    #[test]
    fn no_rule_fits() {
        let examples = ex(&["raven A is white"]);
        let c = cands(&["all ravens are black", "some ravens are black"]);
        assert_eq!(
            eval_induce(&examples, &c, &birds()),
            Err(LogicError::NoRuleFits)
        );
        assert_eq!(
            eval_induce(&examples, &[], &birds()),
            Err(LogicError::NoCandidates)
        );
    }

    #[test]
    fn taxonomy_is_transitive() {
        let t = Taxonomy::new()
            .with("raven", "corvid")
            .with("corvid", "bird");
        assert!(t.is_subclass("ravens", "bird"));
        assert!(!t.is_subclass("bird", "raven"));
    }
}
