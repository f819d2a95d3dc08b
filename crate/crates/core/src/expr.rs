//! Scalar expressions in one variable `x`, used for pointwise functionals.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | atom ('^' factor)?
//! atom   := number | 'x' | call | '(' expr ')'
//! call   := ('exp' | 'log' | 'sqrt') '(' expr ')'
//!         | ('max' | 'min') '(' expr ',' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)`.

use std::fmt;

use crate::error::{Error, Result};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Max,
    Min,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A value together with its derivative in `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        parse_functional(src)
    }

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn scaled(self, c: f64) -> Expr {
        Expr::Bin(BinOp::Mul, Box::new(Expr::Num(c)), Box::new(self))
    }

    pub fn plus(self, other: Expr) -> Expr {
        Expr::Bin(BinOp::Add, Box::new(self), Box::new(other))
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(self.eval_dual(x)?.v)
    }

    /// Value and derivative by forward-mode differentiation. At kinks of
    /// `max`/`min` the derivative of the selected branch is returned, which
    /// is a valid one-sided derivative.
    pub fn eval_dual(&self, x: f64) -> Result<Dual> {
        let out = self.dual(x)?;
        if !out.v.is_finite() {
            return Err(Error::Domain(format!("`{self}` is not finite at x = {x}")));
        }
        Ok(out)
    }

    /// Numerical second derivative, central differences on the exact first
    /// derivative.
    pub fn second_derivative(&self, x: f64) -> Result<f64> {
        let h = 1e-5 * (1.0 + x.abs());
        let lo = (x - h).max(0.0);
        let hi = x + h;
        let a = self.eval_dual(lo)?.d;
        let b = self.eval_dual(hi)?.d;
        Ok((b - a) / (hi - lo))
    }

    fn dual(&self, x: f64) -> Result<Dual> {
        let r = match self {
            Expr::Num(c) => Dual { v: *c, d: 0.0 },
            Expr::Var => Dual { v: x, d: 1.0 },
            Expr::Neg(e) => {
                let a = e.dual(x)?;
                Dual { v: -a.v, d: -a.d }
            }
            Expr::Bin(op, l, r) => {
                let a = l.dual(x)?;
                let b = r.dual(x)?;
                match op {
                    BinOp::Add => Dual { v: a.v + b.v, d: a.d + b.d },
                    BinOp::Sub => Dual { v: a.v - b.v, d: a.d - b.d },
                    BinOp::Mul => Dual { v: a.v * b.v, d: a.d * b.v + a.v * b.d },
                    BinOp::Div => {
                        if b.v == 0.0 {
                            return Err(Error::Domain(format!("division by zero at x = {x}")));
                        }
                        Dual { v: a.v / b.v, d: (a.d * b.v - a.v * b.d) / (b.v * b.v) }
                    }
                    BinOp::Pow => pow_dual(a, b, x)?,
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].dual(x)?;
                match f {
                    Func::Exp => {
                        let e = a.v.exp();
                        Dual { v: e, d: e * a.d }
                    }
                    Func::Log => {
                        if a.v <= 0.0 {
                            return Err(Error::Domain(format!("log of {} at x = {x}", a.v)));
                        }
                        Dual { v: a.v.ln(), d: a.d / a.v }
                    }
                    Func::Sqrt => {
                        if a.v < 0.0 {
                            return Err(Error::Domain(format!("sqrt of {} at x = {x}", a.v)));
                        }
                        let s = a.v.sqrt();
                        let d = if s == 0.0 { if a.d == 0.0 { 0.0 } else { f64::INFINITY } } else { a.d / (2.0 * s) };
                        Dual { v: s, d }
                    }
                    Func::Max => {
                        let b = args[1].dual(x)?;
                        if a.v >= b.v { a } else { b }
                    }
                    Func::Min => {
                        let b = args[1].dual(x)?;
                        if a.v <= b.v { a } else { b }
                    }
                }
            }
        };
        if r.v.is_nan() {
            return Err(Error::Domain(format!("undefined value at x = {x}")));
        }
        Ok(r)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn pow_dual(a: Dual, b: Dual, x: f64) -> Result<Dual> {
    let v = a.v.powf(b.v);
    if v.is_nan() {
        return Err(Error::Domain(format!("{}^{} undefined at x = {x}", a.v, b.v)));
    }
    let d = if b.d == 0.0 {
        if a.d == 0.0 { 0.0 } else { b.v * a.v.powf(b.v - 1.0) * a.d }
    } else {
        if a.v <= 0.0 {
            return Err(Error::Domain(format!("variable exponent with base {} at x = {x}", a.v)));
        }
        v * (b.d * a.v.ln() + b.v * a.d / a.v)
    };
    Ok(Dual { v, d })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{})", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Expr::Var => f.write_str("x"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_operand(f, e, e.precedence() < 3)
            }
            Expr::Bin(op, l, r) => {
                let p = self.precedence();
                let sym = match op {
                    BinOp::Add => " + ",
                    BinOp::Sub => " - ",
                    BinOp::Mul => " * ",
                    BinOp::Div => " / ",
                    BinOp::Pow => "^",
                };
                if *op == BinOp::Pow {
                    // right-associative: the base needs parens at equal precedence,
                    // and a negated base must keep its parens too
                    write_operand(f, l, l.precedence() <= p)?;
                    f.write_str(sym)?;
                    write_operand(f, r, r.precedence() < 3)
                } else {
                    write_operand(f, l, l.precedence() < p)?;
                    f.write_str(sym)?;
                    write_operand(f, r, r.precedence() <= p)
                }
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

/// Parses a pointwise functional expression.
pub fn parse_functional(src: &str) -> Result<Expr> {
    let mut p = Parser { src: src.as_bytes(), pos: 0, depth: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    depth: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn enter(&mut self) -> Result<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error("expression nested too deeply"));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        self.enter()?;
        let out = if self.eat(b'-') {
            Expr::Neg(Box::new(self.factor()?))
        } else {
            let base = self.atom()?;
            if self.eat(b'^') {
                Expr::Bin(BinOp::Pow, Box::new(base), Box::new(self.factor()?))
            } else {
                base
            }
        };
        self.depth -= 1;
        Ok(out)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        // the slice is ASCII digits, '.', 'e' and signs only
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        let v: f64 = text.parse().map_err(|_| Error::Parse {
            offset: start,
            message: format!("malformed number {text:?}"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse { offset: start, message: "number out of range".into() });
        }
        Ok(Expr::Num(v))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii identifier");
        if name == "x" {
            return Ok(Expr::Var);
        }
        let Some(func) = Func::from_name(name) else {
            return Err(Error::Parse { offset: start, message: format!("unknown identifier {name:?}") });
        };
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while args.len() < func.arity() {
            self.expect(b',')?;
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        Ok(Expr::Call(func, args))
    }
}
