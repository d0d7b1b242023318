use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::words::{is_tens, is_unit_ordinal, small_unit_value, word_value};

/// A numeric mention found in text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumberMention {
    pub value: i64,
    /// Matched text, verbatim.
    pub surface: String,
    /// Offset in characters (not bytes).
    pub char_offset: usize,
}

impl NumberMention {
    pub fn is_digit_form(&self) -> bool {
        self.surface.chars().any(|c| c.is_ascii_digit())
    }
}

static TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\d{1,3}(?:,\d{3})+|[A-Za-z0-9]+(?:-[A-Za-z0-9]+)*").unwrap());

/// Two-word phrases whose number word is not a quantity.
const IDIOMS: [(&str, &str); 3] = [("no", "one"), ("one", "another"), ("a", "hundred")];

#[derive(Debug)]
struct Token<'a> {
    start: usize,
    end: usize,
    text: &'a str,
    lower: String,
}

enum Part {
    /// A complete number with its byte span.
    Number {
        value: i64,
        start: usize,
        end: usize,
    },
    /// A bare cardinal word that may combine with its neighbour.
    Word {
        value: i64,
        start: usize,
        end: usize,
        word: String,
    },
}

fn digits_value(text: &str) -> Option<i64> {
    if !text.bytes().all(|b| b.is_ascii_digit() || b == b',') {
        return None;
    }
    let digits: String = text.chars().filter(char::is_ascii_digit).collect();
    // saturate absurdly long digit runs; they are still mentions
    Some(digits.parse::<i64>().unwrap_or(i64::MAX))
}

fn token_parts(tok: &Token<'_>) -> Vec<Part> {
    if let Some(v) = digits_value(tok.text) {
        return vec![Part::Number {
            value: v,
            start: tok.start,
            end: tok.end,
        }];
    }
    // mixed letters and digits ("R2", "3rd") are names or ordinals
    if tok.text.bytes().any(|b| b.is_ascii_digit()) {
        return Vec::new();
    }
    let pieces: Vec<&str> = tok.lower.split('-').collect();
    if pieces.len() == 1 {
        return match word_value(&tok.lower) {
            Some(value) => vec![Part::Word {
                value,
                start: tok.start,
                end: tok.end,
                word: tok.lower.clone(),
            }],
            None => Vec::new(),
        };
    }
    if pieces.len() == 2 && is_tens(pieces[0]) {
        if let Some(u) = small_unit_value(pieces[1]) {
            let value = word_value(pieces[0]).unwrap() + u;
            return vec![Part::Number {
                value,
                start: tok.start,
                end: tok.end,
            }];
        }
        if is_unit_ordinal(pieces[1]) {
            return Vec::new();
        }
    }
    // other hyphenated words ("three-legged"): each cardinal piece counts
    let mut out = Vec::new();
    let mut offset = tok.start;
    for piece in tok.text.split('-') {
        let lower = piece.to_ascii_lowercase();
        if let Some(value) = word_value(&lower) {
            out.push(Part::Number {
                value,
                start: offset,
                end: offset + piece.len(),
            });
        }
        offset += piece.len() + 1;
    }
    out
}

fn only_whitespace(text: &str, from: usize, to: usize) -> bool {
    from <= to && text[from..to].chars().all(char::is_whitespace) && from < to
}

/// Finds every numeric mention in `text`, in text order.
///
/// Digit runs (with optional thousands commas) and English cardinal words up
/// to one hundred are recognised, including "twenty-one", "twenty one" and
/// "one hundred"; standalone "hundred" and "thousand" count too. Ordinals,
/// digits glued to letters, "no one", "one another" and "a hundred" do not.
pub fn extract_numbers(text: &str) -> Vec<NumberMention> {
    let tokens: Vec<Token<'_>> = TOKEN
        .find_iter(text)
        .map(|m| Token {
            start: m.start(),
            end: m.end(),
            text: m.as_str(),
            lower: m.as_str().to_ascii_lowercase(),
        })
        .collect();

    let mut spans: Vec<(i64, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = &tokens[i];
        let next = tokens
            .get(i + 1)
            .filter(|n| only_whitespace(text, tok.end, n.start));

        if let Some(n) = next {
            if IDIOMS.iter().any(|(a, b)| *a == tok.lower && *b == n.lower) {
                i += 2;
                continue;
            }
        }

        let parts = token_parts(tok);
        if let (
            [Part::Word {
                value, start, word, ..
            }],
            Some(n),
        ) = (parts.as_slice(), next)
        {
            // "twenty one"
            if is_tens(word) {
                if let Some(u) = small_unit_value(&n.lower) {
                    spans.push((value + u, *start, n.end));
                    i += 2;
                    continue;
                }
            }
            // "one hundred", "one thousand"
            if *value == 1 && (n.lower == "hundred" || n.lower == "thousand") {
                spans.push((word_value(&n.lower).unwrap(), *start, n.end));
                i += 2;
                continue;
            }
        }
        for p in parts {
            match p {
                Part::Number { value, start, end }
                | Part::Word {
                    value, start, end, ..
                } => spans.push((value, start, end)),
            }
        }
        i += 1;
    }

    let mut chars_before = 0;
    let mut last_byte = 0;
    spans
        .into_iter()
        .map(|(value, start, end)| {
            chars_before += text[last_byte..start].chars().count();
            last_byte = start;
            NumberMention {
                value,
                surface: text[start..end].to_string(),
                char_offset: chars_before,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(text: &str) -> Vec<i64> {
        extract_numbers(text).into_iter().map(|m| m.value).collect()
    }

    #[test]
    fn basic_examples() {
        assert!(extract_numbers("").is_empty());
        assert_eq!(
            values("one crate of cryo-cells ... two additional crates"),
            vec![1, 2]
        );
        assert_eq!(values("twenty-one rods and 14 coils"), vec![21, 14]);
        assert!(values("the third moon rose").is_empty());
    }

    #[test]
    fn surfaces_and_offsets() {
        let ms = extract_numbers("Él vio twenty one rods, then 1,200 more.");
        assert_eq!(ms.len(), 2);
        assert_eq!(
            ms[0],
            NumberMention {
                value: 21,
                surface: "twenty one".into(),
                char_offset: 7
            }
        );
        assert_eq!(
            ms[1],
            NumberMention {
                value: 1200,
                surface: "1,200".into(),
                char_offset: 29
            }
        );
    }

    #[test]
    fn idioms_and_names() {
        assert!(values("No one saw someone leave; they helped one another.").is_empty());
        assert!(values("Droid R2 and the 3rd gate").is_empty());
        assert!(values("a hundred reasons").is_empty());
        assert_eq!(values("one hundred lanterns"), vec![100]);
        assert_eq!(values("hundreds of hundred"), vec![100]);
        assert_eq!(values("the twenty-first day"), Vec::<i64>::new());
        assert_eq!(values("a three-legged stool"), vec![3]);
        assert_eq!(values("ONE of them"), vec![1]);
        assert_eq!(values("one's own"), vec![1]);
    }

    #[test]
    fn compound_only_across_plain_whitespace() {
        assert_eq!(values("twenty, one"), vec![20, 1]);
        assert_eq!(values("twenty\none"), vec![21]);
        assert_eq!(values("twenty ten"), vec![20, 10]);
    }
}
