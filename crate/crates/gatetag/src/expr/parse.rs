//! Expression text grammar.
//!
//! ```text
//! expr  := xor ('|' xor)*          // n-ary Or
//! xor   := and ('^' and)*          // left-folded into binary Xor
//! and   := unary ('&' unary)*      // n-ary And
//! unary := '!' unary | atom
//! atom  := ident | '0' | '1' | '(' expr ')'
//! ident := [A-Za-z_][A-Za-z0-9_.\[\]]*
//! ```
//!
//! Precedence is `!` > `&` > `^` > `|`; whitespace separates tokens and is
//! otherwise ignored. Errors carry the byte offset into the input.

use super::ast::BoolExpr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unexpected character `{ch}` at byte {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expected {expected} at byte {pos}, found `{found}`")]
    Unexpected {
        expected: &'static str,
        found: String,
        pos: usize,
    },
    #[error("trailing input at byte {pos}")]
    Trailing { pos: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Const(bool),
    Not,
    And,
    Or,
    Xor,
    LParen,
    RParen,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => s.clone(),
            Tok::Const(b) => if *b { "1" } else { "0" }.to_string(),
            Tok::Not => "!".to_string(),
            Tok::And => "&".to_string(),
            Tok::Or => "|".to_string(),
            Tok::Xor => "^".to_string(),
            Tok::LParen => "(".to_string(),
            Tok::RParen => ")".to_string(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_cont(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '[' | ']')
}

fn lex(s: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut toks = Vec::new();
    let mut it = s.char_indices().peekable();
    while let Some(&(pos, c)) = it.peek() {
        match c {
            c if c.is_whitespace() => {
                it.next();
            }
            '!' | '&' | '|' | '^' | '(' | ')' => {
                it.next();
                let t = match c {
                    '!' => Tok::Not,
                    '&' => Tok::And,
                    '|' => Tok::Or,
                    '^' => Tok::Xor,
                    '(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                toks.push((t, pos));
            }
            '0' | '1' => {
                it.next();
                toks.push((Tok::Const(c == '1'), pos));
            }
            c if is_ident_start(c) => {
                let start = pos;
                let mut end = pos + c.len_utf8();
                it.next();
                while let Some(&(p, c2)) = it.peek() {
                    if is_ident_cont(c2) {
                        end = p + c2.len_utf8();
                        it.next();
                    } else {
                        break;
                    }
                }
                toks.push((Tok::Ident(s[start..end].to_string()), start));
            }
            _ => return Err(ParseError::UnexpectedChar { ch: c, pos }),
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(t, _)| t)
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.at).cloned();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expr(&mut self) -> Result<BoolExpr, ParseError> {
        let first = self.xor()?;
        if self.peek() != Some(&Tok::Or) {
            return Ok(first);
        }
        let mut children = vec![first];
        while self.peek() == Some(&Tok::Or) {
            self.bump();
            children.push(self.xor()?);
        }
        Ok(BoolExpr::Or(children))
    }

    fn xor(&mut self) -> Result<BoolExpr, ParseError> {
        let mut e = self.and()?;
        while self.peek() == Some(&Tok::Xor) {
            self.bump();
            let rhs = self.and()?;
            e = BoolExpr::xor(e, rhs);
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<BoolExpr, ParseError> {
        let first = self.unary()?;
        if self.peek() != Some(&Tok::And) {
            return Ok(first);
        }
        let mut children = vec![first];
        while self.peek() == Some(&Tok::And) {
            self.bump();
            children.push(self.unary()?);
        }
        Ok(BoolExpr::And(children))
    }

    fn unary(&mut self) -> Result<BoolExpr, ParseError> {
        if self.peek() == Some(&Tok::Not) {
            self.bump();
            return Ok(BoolExpr::not(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<BoolExpr, ParseError> {
        match self.bump() {
            None => Err(ParseError::UnexpectedEnd),
            Some((Tok::Ident(s), _)) => Ok(BoolExpr::Var(s)),
            Some((Tok::Const(b), _)) => Ok(BoolExpr::Const(b)),
            Some((Tok::LParen, open)) => {
                let e = self.expr()?;
                match self.bump() {
                    Some((Tok::RParen, _)) => Ok(e),
                    Some((t, pos)) => Err(ParseError::Unexpected {
                        expected: "`)`",
                        found: t.describe(),
                        pos,
                    }),
                    None => Err(ParseError::Unexpected {
                        expected: "`)` for group",
                        found: "end of input".to_string(),
                        pos: open,
                    }),
                }
            }
            Some((t, pos)) => Err(ParseError::Unexpected {
                expected: "an expression",
                found: t.describe(),
                pos,
            }),
        }
    }
}

pub fn parse_expr(s: &str) -> Result<BoolExpr, ParseError> {
    let mut p = Parser { toks: lex(s)?, at: 0 };
    let e = p.expr()?;
    if let Some((_, pos)) = p.toks.get(p.at) {
        return Err(ParseError::Trailing { pos: *pos });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> BoolExpr {
        BoolExpr::var(s)
    }

    #[test]
    fn precedence_not_and_xor_or() {
        assert_eq!(
            parse_expr("!a|b").unwrap(),
            BoolExpr::or(vec![BoolExpr::not(v("a")), v("b")])
        );
        assert_eq!(
            parse_expr("a & b | c").unwrap(),
            BoolExpr::or(vec![BoolExpr::and(vec![v("a"), v("b")]), v("c")])
        );
        assert_eq!(
            parse_expr("a ^ b & c").unwrap(),
            BoolExpr::xor(v("a"), BoolExpr::and(vec![v("b"), v("c")]))
        );
        assert_eq!(
            parse_expr("a | b ^ c").unwrap(),
            BoolExpr::or(vec![v("a"), BoolExpr::xor(v("b"), v("c"))])
        );
    }

    #[test]
    fn nary_collection_and_binary_xor_fold() {
        assert_eq!(
            parse_expr("a & b & c").unwrap(),
            BoolExpr::And(vec![v("a"), v("b"), v("c")])
        );
        assert_eq!(
            parse_expr("a ^ b ^ c").unwrap(),
            BoolExpr::xor(BoolExpr::xor(v("a"), v("b")), v("c"))
        );
    }

    #[test]
    fn parens_and_constants() {
        assert_eq!(parse_expr("(a & b)").unwrap(), BoolExpr::and(vec![v("a"), v("b")]));
        assert_eq!(parse_expr("((a))").unwrap(), v("a"));
        assert_eq!(
            parse_expr("!(1 | net_5[3])").unwrap(),
            BoolExpr::not(BoolExpr::or(vec![BoolExpr::Const(true), v("net_5[3]")]))
        );
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(
            parse_expr("a @ b"),
            Err(ParseError::UnexpectedChar { ch: '@', pos: 2 })
        );
        assert_eq!(parse_expr("a b").unwrap_err(), ParseError::Trailing { pos: 2 });
        assert_eq!(parse_expr("").unwrap_err(), ParseError::UnexpectedEnd);
        assert!(matches!(
            parse_expr("(a | b").unwrap_err(),
            ParseError::Unexpected { .. }
        ));
        assert!(matches!(
            parse_expr("a &").unwrap_err(),
            ParseError::UnexpectedEnd
        ));
    }

    #[test]
    fn golden_round_trip() {
        let e = parse_expr("!(((R1 ^ R2)) | (!R2))").unwrap();
        assert_eq!(
            e,
            BoolExpr::not(BoolExpr::or(vec![
                BoolExpr::xor(v("R1"), v("R2")),
                BoolExpr::not(v("R2")),
            ]))
        );
        assert_eq!(super::super::to_text(&e), "!(((R1 ^ R2)) | (!R2))");
    }
}
