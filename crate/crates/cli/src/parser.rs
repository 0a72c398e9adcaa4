//! Polynomial expression grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor ('*' factor)*
//! factor := base ('^' uint)?
//! base   := number | ident | '(' expr ')' | '-' base
//! ```
//!
//! Implicit multiplication is rejected.

use std::collections::HashMap;
use std::fmt;

use hocbf_core::poly::{Poly, PolyError, VarSpace};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

fn syntax(col: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { col, msg: msg.into() }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Int(u32),
    Ident(String),
    Op(char),
}

/// Tokens with their 1-based column.
fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integral = true;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                integral = false;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    integral = false;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| syntax(col, format!("malformed number `{s}`")))?;
            let tok = match s.parse::<u32>() {
                Ok(n) if integral => Tok::Int(n),
                _ => Tok::Num(v),
            };
            out.push((tok, col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), col));
        } else if "+-*^()".contains(c) {
            out.push((Tok::Op(c), col));
            i += 1;
        } else {
            return Err(syntax(col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.1)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while self.eat('*') {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    /// Unary minus binds looser than `^`, so `-x^2` is `-(x^2)`.
    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if self.eat('^') {
            let col = self.col();
            return match self.peek().cloned() {
                Some(Tok::Int(k)) => {
                    self.pos += 1;
                    Ok(Expr::Pow(Box::new(base), k))
                }
                _ => Err(syntax(col, "exponent must be a nonnegative integer")),
            };
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Int(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n as f64))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(Expr::Var(name))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(syntax(self.col(), "expected `)`"));
                }
                Ok(e)
            }
            Some(Tok::Op(c)) => Err(syntax(col, format!("unexpected `{c}`"))),
            None => Err(syntax(col, "unexpected end of expression")),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    if toks.is_empty() {
        return Err(syntax(1, "empty expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col: text.chars().count() + 1,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        let msg = match p.peek() {
            Some(Tok::Ident(_)) | Some(Tok::Num(_)) | Some(Tok::Int(_)) | Some(Tok::Op('(')) => {
                "expected an operator (implicit multiplication is not allowed)".to_string()
            }
            Some(t) => format!("unexpected {t:?}"),
            None => unreachable!(),
        };
        return Err(syntax(p.col(), msg));
    }
    Ok(e)
}

impl Expr {
    /// Lowers to a polynomial; identifiers resolve first in `defs`, then in `space`.
    pub fn lower_with(&self, space: &VarSpace, defs: &HashMap<String, Poly>) -> Result<Poly, ParseError> {
        Ok(match self {
            Expr::Num(v) => Poly::constant(space, *v),
            Expr::Var(name) => match defs.get(name) {
                Some(p) => p.clone(),
                None => Poly::var_named(space, name).map_err(|_| ParseError::UnknownIdentifier(name.clone()))?,
            },
            Expr::Neg(e) => e.lower_with(space, defs)?.scale(-1.0),
            Expr::Add(a, b) => a.lower_with(space, defs)?.try_add(&b.lower_with(space, defs)?)?,
            Expr::Sub(a, b) => a.lower_with(space, defs)?.try_sub(&b.lower_with(space, defs)?)?,
            Expr::Mul(a, b) => a.lower_with(space, defs)?.try_mul(&b.lower_with(space, defs)?)?,
            Expr::Pow(a, k) => a.lower_with(space, defs)?.try_pow(*k)?,
        })
    }

    pub fn lower(&self, space: &VarSpace) -> Result<Poly, ParseError> {
        self.lower_with(space, &HashMap::new())
    }

    /// Direct numeric evaluation; `lookup` maps identifiers to values.
    pub fn eval(&self, lookup: &dyn Fn(&str) -> f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => lookup(name),
            Expr::Neg(e) => -e.eval(lookup),
            Expr::Add(a, b) => a.eval(lookup) + b.eval(lookup),
            Expr::Sub(a, b) => a.eval(lookup) - b.eval(lookup),
            Expr::Mul(a, b) => a.eval(lookup) * b.eval(lookup),
            Expr::Pow(a, k) => a.eval(lookup).powi(*k as i32),
        }
    }
}

/// Fully parenthesized form that parses back to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(name) => write!(f, "{name}"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
        }
    }
}

pub fn parse_poly(text: &str, space: &VarSpace) -> Result<Poly, ParseError> {
    parse_expr(text)?.lower(space)
}

pub fn parse_poly_with(text: &str, space: &VarSpace, defs: &HashMap<String, Poly>) -> Result<Poly, ParseError> {
    parse_expr(text)?.lower_with(space, defs)
}
