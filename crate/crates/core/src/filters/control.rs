//! Causal control laws for feedback filtering.
//!
//! A law maps the current time and the record prefix (increments whose
//! left timestamps precede the current time) to a scalar control u_t. The
//! expression form accepts a small arithmetic language:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | 't' | 'Y' | ident '(' args ')' | '(' expr ')'
//! ```
//!
//! `Y` is the cumulative record, `ma(Y, w)` the average of dY/dt over the
//! trailing window of `w` time units (shortened at the start of the
//! record). Other functions: `clip(x, lo, hi)`, `min`, `max`, `abs`,
//! `sin`, `cos`, `exp`, `sqrt`, `tanh`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub trait ControlLaw: Send + Sync {
    /// u_t given the record entries strictly before t.
    fn control(&self, t: f64, dt: f64, prefix: &[f64]) -> f64;
}

/// Wraps a closure `(t, dt, prefix) -> u`.
pub struct FnControl<F>(pub F);

impl<F> ControlLaw for FnControl<F>
where
    F: Fn(f64, f64, &[f64]) -> f64 + Send + Sync,
{
    fn control(&self, t: f64, dt: f64, prefix: &[f64]) -> f64 {
        (self.0)(t, dt, prefix)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64),
    Time,
    Cumulative,
    MovingAverage(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Clip,
    Min,
    Max,
    Abs,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Tanh,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "clip" => (Func::Clip, 3),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "abs" => (Func::Abs, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "sqrt" => (Func::Sqrt, 1),
            "tanh" => (Func::Tanh, 1),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse()
                .map_err(|_| Error::invalid("control", format!("bad number `{text}`")))?;
            out.push(Token::Num(value));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::invalid("control", format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat_op(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(Error::invalid("control", format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op('+') {
                BinOp::Add
            } else if self.eat_op('-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat_op('*') {
                BinOp::Mul
            } else if self.eat_op('/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_op('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat_op('+') {
            return self.unary();
        }
        let base = self.atom()?;
        if self.eat_op('^') {
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "t" => Ok(Expr::Time),
                    "Y" => Ok(Expr::Cumulative),
                    "ma" => {
                        self.expect_op('(')?;
                        if self.peek() != Some(&Token::Ident("Y".into())) {
                            return Err(Error::invalid("control", "ma() takes Y as its first argument"));
                        }
                        self.pos += 1;
                        self.expect_op(',')?;
                        let window = self.expr()?;
                        self.expect_op(')')?;
                        Ok(Expr::MovingAverage(Box::new(window)))
                    }
                    other => {
                        let (func, arity) = Func::lookup(other)
                            .ok_or_else(|| Error::invalid("control", format!("unknown name `{other}`")))?;
                        self.expect_op('(')?;
                        let mut args = vec![self.expr()?];
                        while self.eat_op(',') {
                            args.push(self.expr()?);
                        }
                        self.expect_op(')')?;
                        if args.len() != arity {
                            return Err(Error::invalid(
                                "control",
                                format!("{other}() takes {arity} arguments, got {}", args.len()),
                            ));
                        }
                        Ok(Expr::Call(func, args))
                    }
                }
            }
            Some(Token::Op(c)) => Err(Error::invalid("control", format!("unexpected `{c}`"))),
            None => Err(Error::invalid("control", "unexpected end of expression")),
        }
    }
}

struct Context<'a> {
    t: f64,
    dt: f64,
    prefix: &'a [f64],
}

impl Expr {
    fn eval(&self, ctx: &Context<'_>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Time => ctx.t,
            Expr::Cumulative => ctx.prefix.iter().sum(),
            Expr::MovingAverage(window) => {
                let w = window.eval(ctx);
                if ctx.prefix.is_empty() || !(w > 0.0) {
                    return 0.0;
                }
                let n = ((w / ctx.dt).round() as usize).clamp(1, ctx.prefix.len());
                let tail = &ctx.prefix[ctx.prefix.len() - n..];
                tail.iter().sum::<f64>() / (n as f64 * ctx.dt)
            }
            Expr::Neg(e) => -e.eval(ctx),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(ctx), b.eval(ctx));
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Pow => x.powf(y),
                }
            }
            Expr::Call(f, args) => {
                let v: Vec<f64> = args.iter().map(|a| a.eval(ctx)).collect();
                match f {
                    Func::Clip => v[0].max(v[1]).min(v[2]),
                    Func::Min => v[0].min(v[1]),
                    Func::Max => v[0].max(v[1]),
                    Func::Abs => v[0].abs(),
                    Func::Sin => v[0].sin(),
                    Func::Cos => v[0].cos(),
                    Func::Exp => v[0].exp(),
                    Func::Sqrt => v[0].sqrt(),
                    Func::Tanh => v[0].tanh(),
                }
            }
        }
    }
}

/// A control law parsed from the expression language.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionLaw {
    source: String,
    expr: Expr,
}

impl ExpressionLaw {
    pub fn source(&self) -> &str {
        &self.source
    }
}

impl FromStr for ExpressionLaw {
    type Err = Error;

    fn from_str(src: &str) -> Result<Self> {
        let mut parser = Parser {
            tokens: tokenize(src)?,
            pos: 0,
        };
        let expr = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::invalid("control", "trailing input after expression"));
        }
        Ok(ExpressionLaw {
            source: src.to_string(),
            expr,
        })
    }
}

impl fmt::Display for ExpressionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl ControlLaw for ExpressionLaw {
    fn control(&self, t: f64, dt: f64, prefix: &[f64]) -> f64 {
        self.expr.eval(&Context { t, dt, prefix })
    }
}
