//! Minimal S-expression reader/printer for symbolic query nodes.

use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    /// Bare symbol or number.
    Atom(String),
    /// Double-quoted string.
    Str(String),
    List(Vec<SExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("s-expression error at offset {offset}: {message}")]
pub struct SExprError {
    pub offset: usize,
    pub message: String,
}

fn err<T>(offset: usize, message: impl Into<String>) -> Result<T, SExprError> {
    Err(SExprError {
        offset,
        message: message.into(),
    })
}

impl SExpr {
    pub fn head(&self) -> Option<&str> {
        match self {
            SExpr::List(items) => match items.first() {
                Some(SExpr::Atom(a)) => Some(a),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn items(&self) -> &[SExpr] {
        match self {
            SExpr::List(items) => items,
            _ => &[],
        }
    }

    /// Text of an atom or string.
    pub fn text(&self) -> Option<&str> {
        match self {
            SExpr::Atom(s) | SExpr::Str(s) => Some(s),
            SExpr::List(_) => None,
        }
    }

    pub fn parse(src: &str) -> Result<SExpr, SExprError> {
        let bytes = src.as_bytes();
        let mut pos = 0;
        let expr = read(src, bytes, &mut pos)?;
        skip_ws(bytes, &mut pos);
        if pos != bytes.len() {
            return err(pos, "trailing input");
        }
        Ok(expr)
    }

    /// Indented rendering; lists of atoms/strings stay on one line.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        write_pretty(self, 0, &mut out);
        out
    }
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && (bytes[*pos] as char).is_ascii_whitespace() {
        *pos += 1;
    }
}

fn read(src: &str, bytes: &[u8], pos: &mut usize) -> Result<SExpr, SExprError> {
    skip_ws(bytes, pos);
    let start = *pos;
    match bytes.get(*pos) {
        None => err(start, "unexpected end of input"),
        Some(b')') => err(start, "unbalanced ')'"),
        Some(b'(') => {
            *pos += 1;
            let mut items = Vec::new();
            loop {
                skip_ws(bytes, pos);
                match bytes.get(*pos) {
                    None => return err(start, "unclosed '('"),
                    Some(b')') => {
                        *pos += 1;
                        return Ok(SExpr::List(items));
                    }
                    Some(_) => items.push(read(src, bytes, pos)?),
                }
            }
        }
        Some(b'"') => {
            *pos += 1;
            let mut s = String::new();
            let mut chars = src[*pos..].char_indices();
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        *pos += i + 1;
                        return Ok(SExpr::Str(s));
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => s.push(e),
                        None => break,
                    },
                    c => s.push(c),
                }
            }
            err(start, "unterminated string")
        }
        Some(_) => {
            let len = src[start..]
                .find(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == '"')
                .unwrap_or(src.len() - start);
            *pos += len;
            Ok(SExpr::Atom(src[start..start + len].to_string()))
        }
    }
}

fn write_flat(e: &SExpr, out: &mut String) {
    match e {
        SExpr::Atom(a) => out.push_str(a),
        SExpr::Str(s) => {
            out.push('"');
            for c in s.chars() {
                if c == '"' || c == '\\' {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        SExpr::List(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                write_flat(item, out);
            }
            out.push(')');
        }
    }
}

/// A list is printed on one line when it nests at most one level,
/// e.g. `(CAUSE "x" (simplicity 2) (likelihood 0.8))`.
fn is_shallow(e: &SExpr) -> bool {
    e.items()
        .iter()
        .all(|i| i.items().iter().all(|j| !matches!(j, SExpr::List(_))))
}

fn write_pretty(e: &SExpr, indent: usize, out: &mut String) {
    if is_shallow(e) {
        write_flat(e, out);
        return;
    }
    let items = e.items();
    out.push('(');
    write_flat(&items[0], out);
    for item in &items[1..] {
        let _ = write!(out, "\n{:width$}", "", width = indent + 2);
        write_pretty(item, indent + 2, out);
    }
    out.push(')');
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_nested_lists_and_strings() {
        let e = SExpr::parse(r#"(CAUSE "power \"surge\"" (simplicity 2))"#).unwrap();
        assert_eq!(e.head(), Some("CAUSE"));
        assert_eq!(e.items()[1], SExpr::Str("power \"surge\"".into()));
        assert_eq!(e.items()[2].items()[1], SExpr::Atom("2".into()));
        let again = SExpr::parse(&e.pretty()).unwrap();
        assert_eq!(again, e);
    }

    #[test]
    fn errors_have_offsets() {
        assert_eq!(SExpr::parse("(A (B)").unwrap_err().offset, 0);
        assert_eq!(SExpr::parse("(A))").unwrap_err().offset, 3);
        assert_eq!(SExpr::parse("(A \"x").unwrap_err().offset, 3);
    }
}
