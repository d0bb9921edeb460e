//! A small expression language for declaring vector fields.
//!
//! Scenario configurations describe dynamics declaratively as one expression
//! per state coordinate, over the variables `x1..xn` (state) and `w1..wm`
//! (disturbance). The grammar supports:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := ('-' | '+') factor | power
//! power  := atom ('^' integer)?
//! atom   := number | variable | function '(' expr ')' | '(' expr ')'
//! ```
//!
//! with functions `sin`, `cos`, `exp`, `sqrt`, `abs`. Evaluation is a plain
//! tree walk; expressions are pure, so concurrent evaluation is safe.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use nalgebra::DVector;

use crate::{Error, Result};

// Pull in `sin`, `cos`, ... for f64 in no_std builds.
#[allow(unused_imports)]
use nalgebra::ComplexField;

/// Built-in scalar functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Abs => v.abs(),
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// State variable `x{index+1}`.
    StateVar(usize),
    /// Disturbance variable `w{index+1}`.
    NoiseVar(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Integer power (exponent ≥ 0).
    Pow(Box<Expr>, u32),
    Apply(Func, Box<Expr>),
}

impl Expr {
    /// Parses an expression from source text.
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, at: 0 };
        let e = p.expr()?;
        if p.at != p.tokens.len() {
            return Err(Error::InvalidInput(alloc::format!(
                "unexpected trailing input in expression `{src}`"
            )));
        }
        Ok(e)
    }

    /// Evaluates the expression at the given state/disturbance point.
    pub fn eval(&self, x: &DVector<f64>, w: &DVector<f64>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::StateVar(i) => x[*i],
            Expr::NoiseVar(i) => w[*i],
            Expr::Neg(e) => -e.eval(x, w),
            Expr::Add(a, b) => a.eval(x, w) + b.eval(x, w),
            Expr::Sub(a, b) => a.eval(x, w) - b.eval(x, w),
            Expr::Mul(a, b) => a.eval(x, w) * b.eval(x, w),
            Expr::Div(a, b) => a.eval(x, w) / b.eval(x, w),
            Expr::Pow(a, k) => a.eval(x, w).powi(*k as i32),
            Expr::Apply(f, e) => f.apply(e.eval(x, w)),
        }
    }

    /// Largest state index referenced, plus one (0 if none).
    pub fn state_arity(&self) -> usize {
        self.fold_arity(true)
    }

    /// Largest disturbance index referenced, plus one (0 if none).
    pub fn noise_arity(&self) -> usize {
        self.fold_arity(false)
    }

    fn fold_arity(&self, state: bool) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::StateVar(i) => {
                if state {
                    i + 1
                } else {
                    0
                }
            }
            Expr::NoiseVar(i) => {
                if state {
                    0
                } else {
                    i + 1
                }
            }
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Apply(_, e) => e.fold_arity(state),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                core::cmp::max(a.fold_arity(state), b.fold_arity(state))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_digit() || d == '.' {
                        i += 1;
                    } else if (d == 'e' || d == 'E')
                        && i + 1 < bytes.len()
                        && {
                            let n = bytes[i + 1] as char;
                            n.is_ascii_digit() || n == '+' || n == '-'
                        }
                    {
                        i += 2;
                    } else {
                        break;
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    Error::InvalidInput(alloc::format!("malformed number `{text}`"))
                })?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len() {
                    let d = bytes[i] as char;
                    if d.is_ascii_alphanumeric() || d == '_' {
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push(Token::Ident(src[start..i].to_string()));
            }
            _ => {
                return Err(Error::InvalidInput(alloc::format!(
                    "unexpected character `{c}` in expression"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.at)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.at).cloned();
        if t.is_some() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, t: Token) -> Result<()> {
        match self.bump() {
            Some(got) if got == t => Ok(()),
            other => Err(Error::InvalidInput(alloc::format!(
                "expected {t:?}, found {other:?}"
            ))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Minus) => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(Token::Plus) => {
                self.bump();
                self.factor()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.bump();
            match self.bump() {
                Some(Token::Num(v)) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => {
                    Ok(Expr::Pow(Box::new(base), v as u32))
                }
                other => Err(Error::InvalidInput(alloc::format!(
                    "exponent must be a nonnegative integer, found {other:?}"
                ))),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    "abs" => Some(Func::Abs),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect(Token::LParen)?;
                    let e = self.expr()?;
                    self.expect(Token::RParen)?;
                    return Ok(Expr::Apply(f, Box::new(e)));
                }
                parse_variable(&name)
            }
            other => Err(Error::InvalidInput(alloc::format!(
                "expected an operand, found {other:?}"
            ))),
        }
    }
}

fn parse_variable(name: &str) -> Result<Expr> {
    let bad = || {
        Error::InvalidInput(alloc::format!(
            "unknown identifier `{name}` (expected x<k>, w<k>, or a function)"
        ))
    };
    let (kind, digits) = name.split_at(1);
    if digits.is_empty() {
        return Err(bad());
    }
    let idx: usize = digits.parse().map_err(|_| bad())?;
    if idx == 0 {
        return Err(bad());
    }
    match kind {
        "x" => Ok(Expr::StateVar(idx - 1)),
        "w" => Ok(Expr::NoiseVar(idx - 1)),
        _ => Err(bad()),
    }
}
