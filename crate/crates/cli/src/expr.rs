//! A closed expression grammar for time signals:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary ('*' unary)*
//! unary  := '-' unary | atom
//! atom   := number | 't' | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | tanh
//! ```
//!
//! `·` is accepted as a synonym for `*`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    T,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Tanh(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected character `{ch}` at {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("bad number `{0}`")]
    BadNumber(String),
    #[error("trailing input at {0}")]
    Trailing(usize),
}

impl Expr {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::T => t,
            Self::Add(a, b) => a.eval(t) + b.eval(t),
            Self::Sub(a, b) => a.eval(t) - b.eval(t),
            Self::Mul(a, b) => a.eval(t) * b.eval(t),
            Self::Neg(a) => -a.eval(t),
            Self::Sin(a) => a.eval(t).sin(),
            Self::Cos(a) => a.eval(t).cos(),
            Self::Tanh(a) => a.eval(t).tanh(),
        }
    }

    /// Symbolic `d/dt`. The result may use `tanh` squared for `sech²`.
    pub fn derivative(&self) -> Expr {
        use Expr::*;
        let b = Box::new;
        match self {
            Const(_) => Const(0.0),
            T => Const(1.0),
            Add(x, y) => Add(b(x.derivative()), b(y.derivative())),
            Sub(x, y) => Sub(b(x.derivative()), b(y.derivative())),
            Mul(x, y) => Add(
                b(Mul(b(x.derivative()), y.clone())),
                b(Mul(x.clone(), b(y.derivative()))),
            ),
            Neg(x) => Neg(b(x.derivative())),
            Sin(x) => Mul(b(Cos(x.clone())), b(x.derivative())),
            Cos(x) => Neg(b(Mul(b(Sin(x.clone())), b(x.derivative())))),
            Tanh(x) => Mul(
                b(Sub(b(Const(1.0)), b(Mul(b(Tanh(x.clone())), b(Tanh(x.clone())))))),
                b(x.derivative()),
            ),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Debug keeps the shortest round-trip form and always marks the
            // value as a float.
            Self::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => write!(f, "(-{:?})", -c),
            Self::Const(c) => write!(f, "{c:?}"),
            Self::T => f.write_str("t"),
            Self::Add(a, b) => write!(f, "({a} + {b})"),
            Self::Sub(a, b) => write!(f, "({a} - {b})"),
            Self::Mul(a, b) => write!(f, "({a} * {b})"),
            Self::Neg(a) => write!(f, "(-{a})"),
            Self::Sin(a) => write!(f, "sin({a})"),
            Self::Cos(a) => write!(f, "cos({a})"),
            Self::Tanh(a) => write!(f, "tanh({a})"),
        }
    }
}

impl FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser {
            chars: s.chars().collect(),
            pos: 0,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(ExprError::Trailing(p.pos));
        }
        Ok(e)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expect(&mut self, want: char) -> Result<(), ExprError> {
        match self.peek() {
            Some(c) if c == want => {
                self.pos += 1;
                Ok(())
            }
            Some(ch) => Err(ExprError::UnexpectedChar { ch, pos: self.pos }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some('-') | Some('−') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some('*') | Some('·') = self.peek() {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some('-') | Some('−') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            None => Err(ExprError::UnexpectedEnd),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                if name == "t" {
                    return Ok(Expr::T);
                }
                let wrap: fn(Box<Expr>) -> Expr = match name.as_str() {
                    "sin" => Expr::Sin,
                    "cos" => Expr::Cos,
                    "tanh" => Expr::Tanh,
                    _ => return Err(ExprError::UnknownFunction(name)),
                };
                self.expect('(')?;
                let arg = self.expr()?;
                self.expect(')')?;
                Ok(wrap(Box::new(arg)))
            }
            Some(ch) => Err(ExprError::UnexpectedChar { ch, pos: self.pos }),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let n = self.chars.len();
        while self.pos < n && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
            self.pos += 1;
        }
        if self.pos < n && (self.chars[self.pos] == 'e' || self.chars[self.pos] == 'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < n && (self.chars[self.pos] == '+' || self.chars[self.pos] == '-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < n && self.chars[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::BadNumber(text))
    }
}
