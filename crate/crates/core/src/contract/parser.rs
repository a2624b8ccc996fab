//! Lexer and LL(1) recursive-descent parser for contract source.
//!
//! ```text
//! contract    = recognition | degree | sanction ;
//! recognition = "RECOGNITION" "BETWEEN" ORG "AND" ORG "WHERE" predicate
//!               "MAP" "FACTOR" NUMBER { "TOPIC" TAG "->" TAG } ;
//! degree      = "DEGREE" STRING "BY" ORG "REQUIRES" requirement ;
//! sanction    = "SANCTION" "THRESHOLD" INT "WINDOW" INT ;
//! requirement = "ALL" "(" reqlist ")" | "ANY" "(" reqlist ")"
//!             | "ATLEAST" INT "OF" "(" reqlist ")"
//!             | "CREDITS" ">=" NUMBER "IN" TAG | "COURSE" STRING [ "FROM" ORG ] ;
//! reqlist     = requirement { "," requirement } ;
//! predicate   = atom { "AND" atom } ;
//! atom        = "ISSUER" "=" ORG | "TOPIC" "CONTAINS" TAG | "CREDITS" ">=" NUMBER
//!             | "PASSED" | "SOURCE" "IN" "(" kindlist ")" ;
//! ```
//!
//! Every decision point is resolved by the next token alone.

use std::fmt;

use crate::crypto::OrgId;
use crate::ids::{Decimal, DecimalError};
use crate::payload::{is_valid_tag, MAX_TEXT_LEN};
use crate::records::SourceKind;

use super::ast::*;

const KEYWORDS: &[&str] = &[
    "RECOGNITION", "BETWEEN", "AND", "WHERE", "MAP", "FACTOR", "TOPIC", "DEGREE", "BY", "REQUIRES",
    "SANCTION", "THRESHOLD", "WINDOW", "ALL", "ANY", "ATLEAST", "OF", "CREDITS", "IN", "COURSE", "FROM",
    "ISSUER", "CONTAINS", "PASSED", "SOURCE",
];

pub const MAX_FACTOR: Decimal = Decimal::from_int(2);
const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: expected {expected}, found {found}")]
    SyntaxError {
        line: usize,
        col: usize,
        expected: String,
        found: String,
    },
    #[error("semantic error at {line}:{col}: {message}")]
    SemanticError { line: usize, col: usize, message: String },
}

impl ParseError {
    pub fn name(&self) -> &'static str {
        match self {
            ParseError::SyntaxError { .. } => "SyntaxError",
            ParseError::SemanticError { .. } => "SemanticError",
        }
    }

    pub fn position(&self) -> (usize, usize) {
        match self {
            ParseError::SyntaxError { line, col, .. } | ParseError::SemanticError { line, col, .. } => (*line, *col),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Keyword(&'static str),
    Word(String),
    Number(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Ge,
    Arrow,
    Eq,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::Number(n) => write!(f, "number {n}"),
            Tok::Str(_) => f.write_str("string literal"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Ge => f.write_str("`>=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')
}

fn lex(src: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let syntax = |line, col, expected: &str, found: String| ParseError::SyntaxError {
        line,
        col,
        expected: expected.to_owned(),
        found,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c == ' ' || c == '\t' || c == '\r' {
            i += 1;
            col += 1;
            continue;
        }
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        let tok = match c {
            '(' => {
                advance(1, &mut i, &mut col);
                Tok::LParen
            }
            ')' => {
                advance(1, &mut i, &mut col);
                Tok::RParen
            }
            ',' => {
                advance(1, &mut i, &mut col);
                Tok::Comma
            }
            '=' => {
                advance(1, &mut i, &mut col);
                Tok::Eq
            }
            '>' if chars.get(i + 1) == Some(&'=') => {
                advance(2, &mut i, &mut col);
                Tok::Ge
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                advance(2, &mut i, &mut col);
                Tok::Arrow
            }
            '"' => {
                let mut s = String::new();
                advance(1, &mut i, &mut col);
                loop {
                    match chars.get(i) {
                        None => return Err(syntax(line, col, "closing `\"`", "end of input".into())),
                        Some('"') => {
                            advance(1, &mut i, &mut col);
                            break;
                        }
                        Some('\\') => match chars.get(i + 1) {
                            Some(&e @ ('"' | '\\')) => {
                                s.push(e);
                                advance(2, &mut i, &mut col);
                            }
                            _ => return Err(syntax(line, col, "escape `\\\"` or `\\\\`", "`\\`".into())),
                        },
                        Some(&ch) if ch.is_control() => {
                            return Err(syntax(line, col, "closing `\"`", format!("control character {:?}", ch)))
                        }
                        Some(&ch) => {
                            s.push(ch);
                            advance(1, &mut i, &mut col);
                        }
                    }
                }
                Tok::Str(s)
            }
            c if is_word_char(c) => {
                let start = i;
                while i < chars.len() && is_word_char(chars[i]) && !(chars[i] == '-' && chars.get(i + 1) == Some(&'>')) {
                    i += 1;
                    col += 1;
                }
                let word: String = chars[start..i].iter().collect();
                if let Some(k) = KEYWORDS.iter().find(|k| **k == word) {
                    Tok::Keyword(k)
                } else if is_number_literal(&word) {
                    Tok::Number(word)
                } else {
                    Tok::Word(word)
                }
            }
            other => return Err(syntax(tline, tcol, "a token", format!("{other:?}"))),
        };
        out.push(Spanned {
            tok,
            line: tline,
            col: tcol,
        });
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

fn is_number_literal(w: &str) -> bool {
    let (int, frac) = match w.split_once('.') {
        Some((a, b)) => (a, Some(b)),
        None => (w, None),
    };
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    digits(int) && frac.is_none_or(digits)
}

fn is_org_word(w: &str) -> bool {
    let mut chars = w.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric()) && w.len() <= MAX_TEXT_LEN
}

fn org_ref(word: &str) -> OrgRef {
    if word.len() == 64 {
        if let Ok(id) = word.parse::<OrgId>() {
            return OrgRef::Id(id);
        }
    }
    OrgRef::Name(word.to_owned())
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let t = self.peek();
        Err(ParseError::SyntaxError {
            line: t.line,
            col: t.col,
            expected: expected.to_owned(),
            found: t.tok.to_string(),
        })
    }

    fn semantic<T>(&self, at: &Spanned, message: impl Into<String>) -> PResult<T> {
        Err(ParseError::SemanticError {
            line: at.line,
            col: at.col,
            message: message.into(),
        })
    }

    fn at_keyword(&self, k: &str) -> bool {
        matches!(self.peek().tok, Tok::Keyword(kw) if kw == k)
    }

    fn keyword(&mut self, k: &str) -> PResult<()> {
        if self.at_keyword(k) {
            self.bump();
            Ok(())
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn punct(&mut self, want: Tok) -> PResult<()> {
        if self.peek().tok == want {
            self.bump();
            Ok(())
        } else {
            self.error(&want.to_string())
        }
    }

    fn org(&mut self) -> PResult<OrgRef> {
        match &self.peek().tok {
            Tok::Word(w) if is_org_word(w) => {
                let r = org_ref(w);
                self.bump();
                Ok(r)
            }
            // a 64-digit hex id that happens to contain no letters
            Tok::Number(n) if n.len() == 64 => {
                let r = org_ref(n);
                self.bump();
                Ok(r)
            }
            _ => self.error("organization"),
        }
    }

    fn tag(&mut self) -> PResult<String> {
        match &self.peek().tok {
            Tok::Word(w) | Tok::Number(w) if is_valid_tag(w) => {
                let w = w.clone();
                self.bump();
                Ok(w)
            }
            _ => self.error("topic tag"),
        }
    }

    fn string(&mut self) -> PResult<String> {
        let at = self.peek().clone();
        match at.tok {
            Tok::Str(ref s) => {
                let s = s.clone();
                self.bump();
                if s.is_empty() || s.len() > MAX_TEXT_LEN {
                    return self.semantic(&at, "string literal must be 1..=256 bytes");
                }
                Ok(s)
            }
            _ => self.error("string literal"),
        }
    }

    fn number(&mut self) -> PResult<(Decimal, Spanned)> {
        let at = self.peek().clone();
        match at.tok {
            Tok::Number(ref n) => {
                let value = n.parse::<Decimal>();
                self.bump();
                match value {
                    Ok(d) => Ok((d, at)),
                    Err(DecimalError::TooPrecise) => self.semantic(&at, "at most 4 fractional digits"),
                    Err(_) => self.semantic(&at, "number out of range"),
                }
            }
            _ => self.error("number"),
        }
    }

    fn int(&mut self) -> PResult<(u64, Spanned)> {
        let at = self.peek().clone();
        match at.tok {
            Tok::Number(ref n) if !n.contains('.') => {
                let value = n.parse::<u64>();
                self.bump();
                match value {
                    Ok(v) => Ok((v, at)),
                    Err(_) => self.semantic(&at, "integer out of range"),
                }
            }
            _ => self.error("integer"),
        }
    }

    fn contract(&mut self) -> PResult<ContractAst> {
        let ast = match &self.peek().tok {
            Tok::Keyword("RECOGNITION") => ContractAst::Recognition(self.recognition()?),
            Tok::Keyword("DEGREE") => ContractAst::Degree(self.degree()?),
            Tok::Keyword("SANCTION") => ContractAst::Sanction(self.sanction()?),
            _ => return self.error("`RECOGNITION`, `DEGREE` or `SANCTION`"),
        };
        if self.peek().tok != Tok::Eof {
            return self.error("end of input");
        }
        Ok(ast)
    }

    fn recognition(&mut self) -> PResult<Recognition> {
        self.keyword("RECOGNITION")?;
        self.keyword("BETWEEN")?;
        let home = self.org()?;
        self.keyword("AND")?;
        let foreign_at = self.peek().clone();
        let foreign = self.org()?;
        if home == foreign {
            return self.semantic(&foreign_at, "home and foreign organization must differ");
        }
        self.keyword("WHERE")?;
        let predicate = self.predicate()?;
        self.keyword("MAP")?;
        self.keyword("FACTOR")?;
        let (factor, factor_at) = self.number()?;
        if factor == Decimal::ZERO || factor > MAX_FACTOR {
            return self.semantic(&factor_at, "factor must lie in (0, 2]");
        }
        let mut topic_map: Vec<(String, String)> = Vec::new();
        while self.at_keyword("TOPIC") {
            self.bump();
            let from_at = self.peek().clone();
            let from = self.tag()?;
            self.punct(Tok::Arrow)?;
            let to = self.tag()?;
            if topic_map.iter().any(|(f, _)| *f == from) {
                return self.semantic(&from_at, format!("topic `{from}` mapped twice"));
            }
            topic_map.push((from, to));
        }
        Ok(Recognition {
            home,
            foreign,
            predicate,
            factor,
            topic_map,
        })
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        let mut atoms: Vec<Atom> = Vec::new();
        loop {
            let at = self.peek().clone();
            let atom = self.atom()?;
            if atoms.iter().any(|a| a.kind() == atom.kind()) {
                return self.semantic(&at, "at most one condition of each kind");
            }
            atoms.push(atom);
            if !self.at_keyword("AND") {
                break;
            }
            self.bump();
        }
        Ok(Predicate { atoms })
    }

    fn atom(&mut self) -> PResult<Atom> {
        match self.peek().tok {
            Tok::Keyword("ISSUER") => {
                self.bump();
                self.punct(Tok::Eq)?;
                Ok(Atom::IssuerEquals(self.org()?))
            }
            Tok::Keyword("TOPIC") => {
                self.bump();
                self.keyword("CONTAINS")?;
                Ok(Atom::TopicContains(self.tag()?))
            }
            Tok::Keyword("CREDITS") => {
                self.bump();
                self.punct(Tok::Ge)?;
                Ok(Atom::CreditsAtLeast(self.number()?.0))
            }
            Tok::Keyword("PASSED") => {
                self.bump();
                Ok(Atom::Passed)
            }
            Tok::Keyword("SOURCE") => {
                self.bump();
                self.keyword("IN")?;
                self.punct(Tok::LParen)?;
                let mut kinds = Vec::new();
                loop {
                    let at = self.peek().clone();
                    let kind = match &at.tok {
                        Tok::Word(w) => SourceKind::from_keyword(w),
                        _ => None,
                    };
                    let Some(kind) = kind else {
                        return self.error("`UNIVERSITY_EXAM`, `MOOC` or `OPEN_BADGE`");
                    };
                    self.bump();
                    if kinds.contains(&kind) {
                        return self.semantic(&at, "source kind listed twice");
                    }
                    kinds.push(kind);
                    if self.peek().tok != Tok::Comma {
                        break;
                    }
                    self.bump();
                }
                self.punct(Tok::RParen)?;
                Ok(Atom::SourceIn(kinds))
            }
            _ => self.error("`ISSUER`, `TOPIC`, `CREDITS`, `PASSED` or `SOURCE`"),
        }
    }

    fn degree(&mut self) -> PResult<Degree> {
        self.keyword("DEGREE")?;
        let degree_name = self.string()?;
        self.keyword("BY")?;
        let issuer = self.org()?;
        self.keyword("REQUIRES")?;
        let requirement = self.requirement()?;
        Ok(Degree {
            issuer,
            degree_name,
            requirement,
        })
    }

    fn requirement(&mut self) -> PResult<Requirement> {
        let at = self.peek().clone();
        if self.depth >= MAX_NESTING {
            return self.semantic(&at, "requirements nested too deeply");
        }
        self.depth += 1;
        let r = self.requirement_inner(at);
        self.depth -= 1;
        r
    }

    fn requirement_inner(&mut self, at: Spanned) -> PResult<Requirement> {
        match at.tok {
            Tok::Keyword("ALL") => {
                self.bump();
                Ok(Requirement::AllOf(self.reqlist()?))
            }
            Tok::Keyword("ANY") => {
                self.bump();
                Ok(Requirement::AnyOf(self.reqlist()?))
            }
            Tok::Keyword("ATLEAST") => {
                self.bump();
                let (n, n_at) = self.int()?;
                self.keyword("OF")?;
                let children = self.reqlist()?;
                if n == 0 || n > children.len() as u64 {
                    return self.semantic(&n_at, format!("ATLEAST {n} of {} requirements", children.len()));
                }
                Ok(Requirement::AtLeastNOf { n: n as u32, children })
            }
            Tok::Keyword("CREDITS") => {
                self.bump();
                self.punct(Tok::Ge)?;
                let (amount, _) = self.number()?;
                self.keyword("IN")?;
                let topic = self.tag()?;
                Ok(Requirement::CreditsAtLeast { amount, topic })
            }
            Tok::Keyword("COURSE") => {
                self.bump();
                let course_id = self.string()?;
                let issuer = if self.at_keyword("FROM") {
                    self.bump();
                    Some(self.org()?)
                } else {
                    None
                };
                Ok(Requirement::Course { course_id, issuer })
            }
            _ => self.error("`ALL`, `ANY`, `ATLEAST`, `CREDITS` or `COURSE`"),
        }
    }

    fn reqlist(&mut self) -> PResult<Vec<Requirement>> {
        self.punct(Tok::LParen)?;
        let mut items = vec![self.requirement()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            items.push(self.requirement()?);
        }
        self.punct(Tok::RParen)?;
        Ok(items)
    }

    fn sanction(&mut self) -> PResult<Sanction> {
        self.keyword("SANCTION")?;
        self.keyword("THRESHOLD")?;
        let (threshold, t_at) = self.int()?;
        self.keyword("WINDOW")?;
        let (window, w_at) = self.int()?;
        if threshold == 0 {
            return self.semantic(&t_at, "threshold must be at least 1");
        }
        if window == 0 {
            return self.semantic(&w_at, "window must be at least 1");
        }
        Ok(Sanction { threshold, window })
    }
}

/// Parses contract source into a syntax tree satisfying all tree invariants.
pub fn parse(source: &str) -> Result<ContractAst, ParseError> {
    let toks = lex(source)?;
    Parser { toks, pos: 0, depth: 0 }.contract()
}

/// Like [`parse`], for arbitrary bytes. Invalid UTF-8 is a syntax error at
/// the offending position.
pub fn parse_bytes(bytes: &[u8]) -> Result<ContractAst, ParseError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse(s),
        Err(e) => {
            let valid = std::str::from_utf8(&bytes[..e.valid_up_to()]).unwrap_or_default();
            let line = valid.matches('\n').count() + 1;
            let col = valid.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            Err(ParseError::SyntaxError {
                line,
                col,
                expected: "UTF-8 text".into(),
                found: "invalid byte sequence".into(),
            })
        }
    }
}
