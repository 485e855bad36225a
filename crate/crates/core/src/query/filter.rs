//! The filter language: an R-flavoured boolean expression over columns.
//!
//! ```text
//! expr      := or
//! or        := and ("|" and)*
//! and       := unary ("&" unary)*
//! unary     := "!" unary | primary
//! primary   := "(" expr ")" | predicate
//! predicate := column cmp literal
//!            | has(column, string) | contains(column, string)
//!            | empty(column) | tagged(column)
//! column    := [A-Za-z_][A-Za-z0-9_]* | `any name`
//! literal   := "string" | decimal number | YYYY-MM-DD
//! ```

use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::database::parse_iso_date;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "==",
            CompareOp::Ne => "!=",
            CompareOp::Lt => "<",
            CompareOp::Le => "<=",
            CompareOp::Gt => ">",
            CompareOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Literal {
    Str(String),
    /// Decimal text as written, e.g. `2020` or `-1.5`.
    Number(String),
    Date(NaiveDate),
}

impl Literal {
    /// Text the literal is compared as.
    pub fn text(&self) -> String {
        match self {
            Literal::Str(s) | Literal::Number(s) => s.clone(),
            Literal::Date(d) => d.format("%Y-%m-%d").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterExpr {
    Or(Vec<FilterExpr>),
    And(Vec<FilterExpr>),
    Not(Box<FilterExpr>),
    Compare { column: String, op: CompareOp, literal: Literal },
    Has { column: String, option: String },
    Contains { column: String, needle: String },
    Empty(String),
    Tagged(String),
}

impl FilterExpr {
    /// Column names referenced anywhere in the expression.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            FilterExpr::Or(xs) | FilterExpr::And(xs) => xs.iter().for_each(|x| x.collect_columns(out)),
            FilterExpr::Not(x) => x.collect_columns(out),
            FilterExpr::Compare { column, .. }
            | FilterExpr::Has { column, .. }
            | FilterExpr::Contains { column, .. }
            | FilterExpr::Empty(column)
            | FilterExpr::Tagged(column) => out.push(column),
        }
    }
}

/// Decimal number syntax shared by literals and numeric cell comparison.
pub fn is_decimal(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    let (int, frac) = match digits.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (digits, None),
    };
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

fn is_bare_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Comma,
    Bang,
    Amp,
    Pipe,
    Op(CompareOp),
    Ident(String),
    Quoted(String),
    Str(String),
    Number(String),
    Date(NaiveDate),
    Eof,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn parse_error(position: usize, expected: &[&str]) -> Error {
    Error::ParseError { position, expected: expected.iter().map(|s| s.to_string()).collect() }
}

impl<'a> Lexer<'a> {
    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>> {
        let mut out = Vec::new();
        loop {
            while self.peek_char().is_some_and(char::is_whitespace) {
                self.pos += self.peek_char().unwrap().len_utf8();
            }
            let start = self.pos;
            let Some(c) = self.peek_char() else {
                out.push((start, Tok::Eof));
                return Ok(out);
            };
            let rest = &self.src[start..];
            let two = |s: &str| rest.starts_with(s);
            let tok = match c {
                '(' => self.one(Tok::LParen),
                ')' => self.one(Tok::RParen),
                ',' => self.one(Tok::Comma),
                '&' => self.one(Tok::Amp),
                '|' => self.one(Tok::Pipe),
                '!' if two("!=") => self.skip(2, Tok::Op(CompareOp::Ne)),
                '!' => self.one(Tok::Bang),
                '=' if two("==") => self.skip(2, Tok::Op(CompareOp::Eq)),
                '=' => return Err(parse_error(start, &["=="])),
                '<' if two("<=") => self.skip(2, Tok::Op(CompareOp::Le)),
                '<' => self.one(Tok::Op(CompareOp::Lt)),
                '>' if two(">=") => self.skip(2, Tok::Op(CompareOp::Ge)),
                '>' => self.one(Tok::Op(CompareOp::Gt)),
                '"' => Tok::Str(self.delimited('"', "closing \"")?),
                '`' => Tok::Quoted(self.delimited('`', "closing `")?),
                c if c.is_ascii_digit() || (c == '-' && rest[1..].starts_with(|d: char| d.is_ascii_digit())) => {
                    self.number()?
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let len = rest.find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len());
                    self.pos += len;
                    Tok::Ident(rest[..len].to_owned())
                }
                _ => return Err(parse_error(start, &["column", "literal", "operator", "(", ")", "!"])),
            };
            out.push((start, tok));
        }
    }

    fn one(&mut self, tok: Tok) -> Tok {
        self.skip(1, tok)
    }

    fn skip(&mut self, n: usize, tok: Tok) -> Tok {
        self.pos += n;
        tok
    }

    /// Reads a `"..."` or `` `...` `` token; `\\` escapes the delimiter and
    /// backslash, `\n` and `\t` are recognized.
    fn delimited(&mut self, delim: char, closing: &str) -> Result<String> {
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek_char() else {
                return Err(parse_error(self.pos, &[closing]));
            };
            self.pos += c.len_utf8();
            match c {
                c if c == delim => return Ok(out),
                '\\' => {
                    let Some(e) = self.peek_char() else {
                        return Err(parse_error(self.pos, &["escape character"]));
                    };
                    let escaped = match e {
                        'n' => '\n',
                        't' => '\t',
                        '\\' => '\\',
                        e if e == delim => e,
                        _ => return Err(parse_error(self.pos, &["\\\\", "\\n", "\\t", closing])),
                    };
                    self.pos += e.len_utf8();
                    out.push(escaped);
                }
                c => out.push(c),
            }
        }
    }

    fn number(&mut self) -> Result<Tok> {
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .skip(1)
            .find(|(_, c)| !(c.is_ascii_digit() || *c == '.' || *c == '-'))
            .map_or(rest.len(), |(i, _)| i);
        let text = &rest[..len];
        self.pos += len;
        if text.len() == 10 && text.as_bytes()[4] == b'-' {
            return parse_iso_date(text).map(Tok::Date).ok_or_else(|| parse_error(start, &["date YYYY-MM-DD"]));
        }
        if is_decimal(text) {
            Ok(Tok::Number(text.to_owned()))
        } else {
            Err(parse_error(start, &["number", "date YYYY-MM-DD"]))
        }
    }
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    at: usize,
}

const PRIMARY_START: &[&str] = &["!", "(", "column", "has(", "contains(", "empty(", "tagged("];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].1
    }

    fn position(&self) -> usize {
        self.tokens[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.at].1.clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        tok
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(parse_error(self.position(), &[name]))
        }
    }

    fn expr(&mut self) -> Result<FilterExpr> {
        let mut terms = vec![self.and()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { FilterExpr::Or(terms) })
    }

    fn and(&mut self) -> Result<FilterExpr> {
        let mut terms = vec![self.unary()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { FilterExpr::And(terms) })
    }

    fn unary(&mut self) -> Result<FilterExpr> {
        if *self.peek() == Tok::Bang {
            self.bump();
            return Ok(FilterExpr::Not(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<FilterExpr> {
        let position = self.position();
        match self.bump() {
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(inner)
            }
            Tok::Ident(name) if *self.peek() == Tok::LParen && is_function(&name) => {
                self.bump();
                let column = self.column()?;
                let call = match name.as_str() {
                    "has" | "contains" => {
                        self.expect(Tok::Comma, ",")?;
                        let arg_at = self.position();
                        let arg = match self.bump() {
                            Tok::Str(s) => s,
                            _ => return Err(parse_error(arg_at, &["string"])),
                        };
                        if name == "has" {
                            FilterExpr::Has { column, option: arg }
                        } else {
                            FilterExpr::Contains { column, needle: arg }
                        }
                    }
                    "empty" => FilterExpr::Empty(column),
                    _ => FilterExpr::Tagged(column),
                };
                self.expect(Tok::RParen, ")")?;
                Ok(call)
            }
            Tok::Ident(column) | Tok::Quoted(column) => {
                let op = match self.peek() {
                    Tok::Op(op) => *op,
                    _ => return Err(parse_error(self.position(), &["==", "!=", "<", "<=", ">", ">="])),
                };
                self.bump();
                let literal_at = self.position();
                let literal = match self.bump() {
                    Tok::Str(s) => Literal::Str(s),
                    Tok::Number(n) => Literal::Number(n),
                    Tok::Date(d) => Literal::Date(d),
                    _ => return Err(parse_error(literal_at, &["string", "number", "date"])),
                };
                Ok(FilterExpr::Compare { column, op, literal })
            }
            _ => Err(parse_error(position, PRIMARY_START)),
        }
    }

    fn column(&mut self) -> Result<String> {
        let position = self.position();
        match self.bump() {
            Tok::Ident(c) | Tok::Quoted(c) => Ok(c),
            _ => Err(parse_error(position, &["column"])),
        }
    }
}

fn is_function(name: &str) -> bool {
    matches!(name, "has" | "contains" | "empty" | "tagged")
}

pub fn parse_filter(text: &str) -> Result<FilterExpr> {
    let tokens = Lexer { src: text, pos: 0 }.tokens()?;
    let mut parser = Parser { tokens, at: 0 };
    let expr = parser.expr()?;
    if *parser.peek() != Tok::Eof {
        let expected: &[&str] = if parser.at == 0 { PRIMARY_START } else { &["&", "|", "end of input"] };
        return Err(parse_error(parser.position(), expected));
    }
    Ok(expr)
}

fn write_column(f: &mut fmt::Formatter<'_>, name: &str) -> fmt::Result {
    if is_bare_identifier(name) {
        f.write_str(name)
    } else {
        f.write_str("`")?;
        for c in name.chars() {
            match c {
                '`' => f.write_str("\\`")?,
                '\\' => f.write_str("\\\\")?,
                c => write!(f, "{c}")?,
            }
        }
        f.write_str("`")
    }
}

fn write_string(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// Canonical form: nested `&`/`|` groups and negated groups are parenthesized,
/// so printing then parsing returns the same tree.
impl fmt::Display for FilterExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let grouped = |e: &FilterExpr| matches!(e, FilterExpr::Or(_) | FilterExpr::And(_));
        let write_child = |f: &mut fmt::Formatter<'_>, e: &FilterExpr, paren: bool| {
            if paren {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            FilterExpr::Or(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write_child(f, x, matches!(x, FilterExpr::Or(_)))?;
                }
                Ok(())
            }
            FilterExpr::And(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    write_child(f, x, grouped(x))?;
                }
                Ok(())
            }
            FilterExpr::Not(x) => {
                f.write_str("!")?;
                write_child(f, x, grouped(x))
            }
            FilterExpr::Compare { column, op, literal } => {
                write_column(f, column)?;
                write!(f, " {} ", op.symbol())?;
                match literal {
                    Literal::Str(s) => write_string(f, s),
                    Literal::Number(n) => f.write_str(n),
                    Literal::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
                }
            }
            FilterExpr::Has { column, option } => {
                f.write_str("has(")?;
                write_column(f, column)?;
                f.write_str(", ")?;
                write_string(f, option)?;
                f.write_str(")")
            }
            FilterExpr::Contains { column, needle } => {
                f.write_str("contains(")?;
                write_column(f, column)?;
                f.write_str(", ")?;
                write_string(f, needle)?;
                f.write_str(")")
            }
            FilterExpr::Empty(column) => {
                f.write_str("empty(")?;
                write_column(f, column)?;
                f.write_str(")")
            }
            FilterExpr::Tagged(column) => {
                f.write_str("tagged(")?;
                write_column(f, column)?;
                f.write_str(")")
            }
        }
    }
}
