use std::collections::BTreeSet;

use num_traits::Num;

use super::{LogicError, Rational};

/// A candidate explanation. Score is `likelihood / simplicity`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cause<S = Rational> {
    pub name: String,
    pub simplicity: S,
    pub likelihood: S,
}

impl<S: Num + PartialOrd + Clone> Cause<S> {
    pub fn new(name: impl Into<String>, simplicity: S, likelihood: S) -> Self {
        Cause {
            name: name.into(),
            simplicity,
            likelihood,
        }
    }

    pub fn score(&self) -> S {
        self.likelihood.clone() / self.simplicity.clone()
    }
}

/// Best explanation: the cause with the highest `likelihood / simplicity`.
/// Ties go to the earliest cause in the list.
///
/// Observations are carried for the record but do not enter the score.
pub fn eval_abduce<S: Num + PartialOrd + Clone>(
    _observations: &BTreeSet<String>,
    causes: &[Cause<S>],
) -> Result<String, LogicError> {
    if causes.is_empty() {
        return Err(LogicError::NoCauses);
    }
    let mut names = BTreeSet::new();
    for c in causes {
        if c.name.trim().is_empty() {
            return Err(LogicError::EmptyName);
        }
        if !names.insert(c.name.as_str()) {
            return Err(LogicError::DuplicateName(c.name.clone()));
        }
        if c.simplicity.partial_cmp(&S::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(LogicError::NonPositiveSimplicity(c.name.clone()));
        }
        if c.likelihood < S::zero() || c.likelihood > S::one() {
            return Err(LogicError::LikelihoodOutOfRange(c.name.clone()));
        }
    }
    let mut best = &causes[0];
    let mut best_score = best.score();
    for c in &causes[1..] {
        let s = c.score();
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    Ok(best.name.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::parse_rational;

    fn r(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn power_surge_beats_ghost() {
        let causes = vec![
            Cause::new("power surge", r("2"), r("0.8")),
            Cause::new("ghost", r("8"), r("0.1")),
        ];
        assert_eq!(causes[0].score(), r("0.4"));
        assert_eq!(causes[1].score(), r("0.0125"));
        assert_eq!(
            eval_abduce(&BTreeSet::new(), &causes).unwrap(),
            "power surge"
        );
    }

    #[test]
    fn single_cause_wins() {
        let causes = vec![Cause::new("only", r("3"), r("0.2"))];
        assert_eq!(eval_abduce(&BTreeSet::new(), &causes).unwrap(), "only");
    }

    #[test]
    fn exact_tie_goes_to_first_listed() {
        let causes = vec![
            Cause::new("a", r("2"), r("0.4")),
            Cause::new("b", r("1"), r("0.2")),
        ];
        assert_eq!(causes[0].score(), causes[1].score());
        assert_eq!(eval_abduce(&BTreeSet::new(), &causes).unwrap(), "a");
        let swapped = vec![causes[1].clone(), causes[0].clone()];
        assert_eq!(eval_abduce(&BTreeSet::new(), &swapped).unwrap(), "b");
    }

    #[test]
    fn domain_errors() {
        let none: Vec<Cause> = vec![];
        assert_eq!(
            eval_abduce(&BTreeSet::new(), &none),
            Err(LogicError::NoCauses)
        );
        let bad = vec![Cause::new("x", r("0"), r("0.5"))];
        assert_eq!(
            eval_abduce(&BTreeSet::new(), &bad),
            Err(LogicError::NonPositiveSimplicity("x".into()))
        );
        let dup = vec![
            Cause::new("x", r("1"), r("0.5")),
            Cause::new("x", r("2"), r("0.5")),
        ];
        assert_eq!(
            eval_abduce(&BTreeSet::new(), &dup),
            Err(LogicError::DuplicateName("x".into()))
        );
        let over = vec![Cause::new("x", r("1"), r("1.5"))];
        assert_eq!(
            eval_abduce(&BTreeSet::new(), &over),
            Err(LogicError::LikelihoodOutOfRange("x".into()))
        );
    }

    #[test]
    fn works_with_floats_too() {
        let causes = vec![Cause::new("p", 2.0_f64, 0.8), Cause::new("g", 8.0, 0.1)];
        assert_eq!(eval_abduce(&BTreeSet::new(), &causes).unwrap(), "p");
    }
}
