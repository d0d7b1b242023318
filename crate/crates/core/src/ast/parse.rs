use std::fmt;

use super::{AstNode, NumericOp, OpNode};
use crate::scalar::AtomScalar;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedEnd,
    UnbalancedClose,
    UnknownOperator(String),
    EmptyOperator,
    InvalidAtom(String),
    TrailingInput,
}

/// Parse failure with the byte offset where the offending construct starts.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{kind} at offset {offset}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub offset: usize,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedEnd => {
                f.write_str("unexpected end of input (unbalanced '[')")
            }
            ParseErrorKind::UnbalancedClose => f.write_str("unbalanced ']'"),
            ParseErrorKind::UnknownOperator(op) => write!(f, "unknown operator {op:?}"),
            ParseErrorKind::EmptyOperator => f.write_str("operator without operands"),
            ParseErrorKind::InvalidAtom(tok) => write!(f, "non-integer atom {tok:?}"),
            ParseErrorKind::TrailingInput => f.write_str("trailing input after tree"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn err<T>(&self, kind: ParseErrorKind, offset: usize) -> Result<T, ParseError> {
        Err(ParseError { kind, offset })
    }

    /// Token up to the next whitespace or bracket.
    fn word(&mut self) -> &'a str {
        let start = self.pos;
        let len = self.src[start..]
            .find(|c: char| c.is_whitespace() || c == '[' || c == ']')
            .unwrap_or(self.src.len() - start);
        self.pos += len;
        &self.src[start..start + len]
    }

    fn node<T: AtomScalar>(&mut self) -> Result<AstNode<T>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            None => self.err(ParseErrorKind::UnexpectedEnd, start),
            Some(b']') => self.err(ParseErrorKind::UnbalancedClose, start),
            Some(b'[') => {
                self.pos += 1;
                self.skip_ws();
                let name = self.word();
                if name.is_empty() {
                    return match self.peek() {
                        None => self.err(ParseErrorKind::UnexpectedEnd, self.pos),
                        _ => self.err(ParseErrorKind::EmptyOperator, start),
                    };
                }
                let op = match NumericOp::from_name(name) {
                    Some(op) => op,
                    None => {
                        return self.err(ParseErrorKind::UnknownOperator(name.to_string()), start)
                    }
                };
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        None => return self.err(ParseErrorKind::UnexpectedEnd, self.pos),
                        Some(b']') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => children.push(self.node()?),
                    }
                }
                if children.is_empty() {
                    return self.err(ParseErrorKind::EmptyOperator, start);
                }
                Ok(AstNode::Op(OpNode::new(op, children)))
            }
            Some(_) => {
                let tok = self.word();
                match tok.parse::<T>() {
                    Ok(v) => Ok(AstNode::Atom(v)),
                    Err(_) => self.err(ParseErrorKind::InvalidAtom(tok.to_string()), start),
                }
            }
        }
    }
}

/// Parses bracketed prefix notation, e.g. `[MAX 3 7 [MIN 1 9 5] 2]`.
///
/// Node ids are assigned in post-order, so `parse_prefix(&t.to_prefix())`
/// reproduces any tree built by this crate.
pub fn parse_prefix<T: AtomScalar>(text: &str) -> Result<AstNode<T>, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let mut node = p.node::<T>()?;
    p.skip_ws();
    if p.pos != text.len() {
        let kind = if p.peek() == Some(b']') {
            ParseErrorKind::UnbalancedClose
        } else {
            ParseErrorKind::TrailingInput
        };
        return Err(ParseError {
            kind,
            offset: p.pos,
        });
    }
    node.assign_post_order_ids();
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<AstNode<i64>, ParseError> {
        parse_prefix(s)
    }

    #[test]
    fn parses_simple_op() {
        let t = parse("[MIN 1 9 5]").unwrap();
        assert_eq!(
            t,
            AstNode::op(
                NumericOp::Min,
                vec![AstNode::atom(1), AstNode::atom(9), AstNode::atom(5)]
            )
        );
    }

    #[test]
    fn unknown_operator_reports_offset() {
        let e = parse("[MAX 3 [BAD 1]]").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownOperator("BAD".into()));
        assert_eq!(e.offset, 7);
    }

    #[test]
    fn whitespace_tolerant() {
        let t = parse("  [ MAX\t3 \n 7 [MIN 1 9 5 ]2 ] ").unwrap();
        assert_eq!(t.to_prefix(), "[MAX 3 7 [MIN 1 9 5] 2]");
        assert_eq!(t.eval(), 7);
    }

    #[test]
    fn error_cases() {
        assert_eq!(
            parse("[SUM 1 2").unwrap_err().kind,
            ParseErrorKind::UnexpectedEnd
        );
        assert_eq!(
            parse("[SUM 1 2]]").unwrap_err(),
            ParseError {
                kind: ParseErrorKind::UnbalancedClose,
                offset: 9
            }
        );
        assert_eq!(
            parse("[SUM]").unwrap_err(),
            ParseError {
                kind: ParseErrorKind::EmptyOperator,
                offset: 0
            }
        );
        assert_eq!(
            parse("[ ]").unwrap_err().kind,
            ParseErrorKind::EmptyOperator
        );
        assert_eq!(
            parse("[SUM 1 x2]").unwrap_err(),
            ParseError {
                kind: ParseErrorKind::InvalidAtom("x2".into()),
                offset: 7
            }
        );
        assert_eq!(
            parse("[SUM 1 2.5]").unwrap_err().kind,
            ParseErrorKind::InvalidAtom("2.5".into())
        );
        assert_eq!(parse("").unwrap_err().kind, ParseErrorKind::UnexpectedEnd);
        assert_eq!(
            parse("3 4").unwrap_err().kind,
            ParseErrorKind::TrailingInput
        );
        assert_eq!(
            parse("]").unwrap_err().kind,
            ParseErrorKind::UnbalancedClose
        );
        assert_eq!(
            parse("[sum 1 2]").unwrap_err().kind,
            ParseErrorKind::UnknownOperator("sum".into())
        );
    }

    #[test]
    fn atom_overflow_is_invalid_atom() {
        assert!(matches!(
            parse_prefix::<i32>("[SUM 99999999999 1]").unwrap_err().kind,
            ParseErrorKind::InvalidAtom(_)
        ));
    }
}
