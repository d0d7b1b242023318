//! English cardinal word table, zero through one hundred.

const UNITS: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 8] = [
    "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// Unit ordinals; used to recognise "twenty-first" style ordinals so their
/// tens part is not counted as a quantity.
const UNIT_ORDINALS: [&str; 9] = [
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
];

/// Value of a single lowercase cardinal word.
pub fn word_value(word: &str) -> Option<i64> {
    if let Some(i) = UNITS.iter().position(|w| *w == word) {
        return Some(i as i64);
    }
    if let Some(i) = TENS.iter().position(|w| *w == word) {
        return Some(20 + 10 * i as i64);
    }
    match word {
        "hundred" => Some(100),
        "thousand" => Some(1000),
        _ => None,
    }
}

pub fn is_tens(word: &str) -> bool {
    TENS.contains(&word)
}

/// 1..=9 as a unit word.
pub fn small_unit_value(word: &str) -> Option<i64> {
    UNITS[1..10]
        .iter()
        .position(|w| *w == word)
        .map(|i| i as i64 + 1)
}

pub fn is_unit_ordinal(word: &str) -> bool {
    UNIT_ORDINALS.contains(&word)
}

/// Canonical word form: "seven", "twenty-one", "one hundred".
///
/// Returns `None` outside 0..=100.
pub fn to_words(value: i64) -> Option<String> {
    match value {
        0..=19 => Some(UNITS[value as usize].to_string()),
        20..=99 => {
            let tens = TENS[(value / 10 - 2) as usize];
            Some(match value % 10 {
                0 => tens.to_string(),
                u => format!("{tens}-{}", UNITS[u as usize]),
            })
        }
        100 => Some("one hundred".to_string()),
        _ => None,
    }
}

/// Every surface rendering the extractor recognises for `value`.
pub fn renderings(value: i64) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(w) = to_words(value) {
        if (21..=99).contains(&value) && value % 10 != 0 {
            out.push(w.replace('-', " "));
        }
        out.push(w);
    }
    if value == 100 {
        out.push("hundred".to_string());
    }
    out.push(value.to_string());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_round_trip_through_value() {
        for v in 0..=19 {
            assert_eq!(word_value(&to_words(v).unwrap()), Some(v));
        }
        assert_eq!(to_words(21).as_deref(), Some("twenty-one"));
        assert_eq!(to_words(90).as_deref(), Some("ninety"));
        assert_eq!(to_words(101), None);
        assert_eq!(small_unit_value("nine"), Some(9));
        assert_eq!(small_unit_value("zero"), None);
    }
}
