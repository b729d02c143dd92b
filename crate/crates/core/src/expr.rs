//! Scalar expressions in `x`, `q`, `t` with exact differentiation.
//!
//! Grammar: `+ - * / ^`, unary minus, parentheses, numbers, `pi`, and the
//! functions `sin cos exp log`. `^` binds tightest and is right-associative.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Var {
    X,
    Q,
    T,
}

impl Var {
    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

#[derive(Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Add(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Neg(Expr),
    Call(Func, Expr),
}

/// Immutable expression tree. Cloning shares structure.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    pub fn var(v: Var) -> Self {
        Self::node(Node::Var(v))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn parse(src: &str) -> Result<Self> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.sum()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected {:?} in {src:?}",
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    pub fn add(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a + b),
            (Some(0.0), _) => other.clone(),
            (_, Some(0.0)) => self.clone(),
            _ => Self::node(Node::Add(self.clone(), other.clone())),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        match &*self.0 {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::node(Node::Neg(self.clone())),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a * b),
            (Some(a), _) | (_, Some(a)) if a == 0.0 => Self::zero(),
            (Some(1.0), _) => other.clone(),
            (_, Some(1.0)) => self.clone(),
            (Some(-1.0), _) => other.neg(),
            (_, Some(-1.0)) => self.neg(),
            _ => Self::node(Node::Mul(self.clone(), other.clone())),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::constant(c).mul(self)
    }

    pub fn div(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) if b != 0.0 => Self::constant(a / b),
            (Some(0.0), _) => Self::zero(),
            (_, Some(1.0)) => self.clone(),
            _ => Self::node(Node::Div(self.clone(), other.clone())),
        }
    }

    pub fn pow(&self, other: &Self) -> Self {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Self::constant(a.powf(b)),
            (_, Some(0.0)) => Self::constant(1.0),
            (_, Some(1.0)) => self.clone(),
            _ => Self::node(Node::Pow(self.clone(), other.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Self {
        self.pow(&Self::constant(n as f64))
    }

    pub fn call(f: Func, arg: &Self) -> Self {
        if let Some(c) = arg.as_const() {
            return Self::constant(apply(f, c));
        }
        match (f, &*arg.0) {
            (Func::Log, Node::Call(Func::Exp, inner)) => inner.clone(),
            _ => Self::node(Node::Call(f, arg.clone())),
        }
    }

    pub fn sin(&self) -> Self {
        Self::call(Func::Sin, self)
    }
    pub fn cos(&self) -> Self {
        Self::call(Func::Cos, self)
    }
    pub fn exp(&self) -> Self {
        Self::call(Func::Exp, self)
    }
    pub fn log(&self) -> Self {
        Self::call(Func::Log, self)
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Var(w) => *w == v,
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.depends_on(v) || b.depends_on(v)
            }
            Node::Neg(a) | Node::Call(_, a) => a.depends_on(v),
        }
    }

    /// Exact partial derivative.
    pub fn diff(&self, v: Var) -> Self {
        match &*self.0 {
            Node::Const(_) => Self::zero(),
            Node::Var(w) => Self::constant(if *w == v { 1.0 } else { 0.0 }),
            Node::Add(a, b) => a.diff(v).add(&b.diff(v)),
            Node::Neg(a) => a.diff(v).neg(),
            Node::Mul(a, b) => a.diff(v).mul(b).add(&a.mul(&b.diff(v))),
            Node::Div(a, b) => a.diff(v).mul(b).sub(&a.mul(&b.diff(v))).div(&b.powi(2)),
            Node::Pow(a, b) => {
                if let Some(c) = b.as_const() {
                    b.mul(&a.pow(&Self::constant(c - 1.0))).mul(&a.diff(v))
                } else {
                    // d(a^b) = a^b (b' log a + b a' / a)
                    self.mul(&b.diff(v).mul(&a.log()).add(&b.mul(&a.diff(v)).div(a)))
                }
            }
            Node::Call(f, a) => {
                let outer = match f {
                    Func::Sin => a.cos(),
                    Func::Cos => a.sin().neg(),
                    Func::Exp => self.clone(),
                    Func::Log => Self::constant(1.0).div(a),
                };
                outer.mul(&a.diff(v))
            }
        }
    }

    pub fn diff_n(&self, v: Var, n: usize) -> Self {
        (0..n).fold(self.clone(), |e, _| e.diff(v))
    }

    /// Evaluates at `point = [x, q, t]`.
    pub fn eval(&self, point: [f64; 3]) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(v) => point[v.index()],
            Node::Add(a, b) => a.eval(point) + b.eval(point),
            Node::Mul(a, b) => a.eval(point) * b.eval(point),
            Node::Div(a, b) => a.eval(point) / b.eval(point),
            Node::Pow(a, b) => {
                let base = a.eval(point);
                match b.as_const() {
                    Some(c) if c.fract() == 0.0 && c.abs() < 64.0 => base.powi(c as i32),
                    _ => base.powf(b.eval(point)),
                }
            }
            Node::Neg(a) => -a.eval(point),
            Node::Call(f, a) => apply(*f, a.eval(point)),
        }
    }

    /// Evaluates a function of `x` alone.
    pub fn eval_x(&self, x: f64) -> f64 {
        self.eval([x, 0.0, 0.0])
    }

    pub fn node_count(&self) -> usize {
        match &*self.0 {
            Node::Const(_) | Node::Var(_) => 1,
            Node::Add(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                1 + a.node_count() + b.node_count()
            }
            Node::Neg(a) | Node::Call(_, a) => 1 + a.node_count(),
        }
    }
}

fn apply(f: Func, v: f64) -> f64 {
    match f {
        Func::Sin => v.sin(),
        Func::Cos => v.cos(),
        Func::Exp => v.exp(),
        Func::Log => v.ln(),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "({c})")
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(Var::X) => write!(f, "x"),
            Node::Var(Var::Q) => write!(f, "q"),
            Node::Var(Var::T) => write!(f, "t"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Mul(a, b) => write!(f, "{a}*{b}"),
            Node::Div(a, b) => write!(f, "({a})/({b})"),
            Node::Pow(a, b) => write!(f, "({a})^({b})"),
            Node::Neg(a) => write!(f, "-({a})"),
            Node::Call(g, a) => {
                let name = match g {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Log => "log",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let src = String::deserialize(d)?;
        Expr::parse(&src).map_err(serde::de::Error::custom)
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
            let v = text
                .parse()
                .map_err(|_| Error::Expression(format!("bad number {text:?}")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek_op() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(format!("expected {c:?}")))
        }
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut acc = self.product()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.product()?;
            acc = if op == '+' {
                acc.add(&rhs)
            } else {
                acc.sub(&rhs)
            };
        }
        Ok(acc)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = if op == '*' {
                acc.mul(&rhs)
            } else {
                acc.div(&rhs)
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(self.unary()?.neg())
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(base.pow(&exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::constant(v)),
            Token::Op('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::var(Var::X)),
                "q" => Ok(Expr::var(Var::Q)),
                "t" => Ok(Expr::var(Var::T)),
                "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                "sin" | "cos" | "exp" | "log" => {
                    let f = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        _ => Func::Log,
                    };
                    self.expect('(')?;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    Ok(Expr::call(f, &arg))
                }
                _ => Err(Error::Expression(format!("unknown identifier {name:?}"))),
            },
            Token::Op(c) => Err(Error::Expression(format!("unexpected {c:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_precedence() {
        let e = Expr::parse("1 + 2*x^2 - -3/q").unwrap();
        assert!((e.eval([1.5, 2.0, 0.0]) - (1.0 + 2.0 * 2.25 + 1.5)).abs() < 1e-15);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.as_const(), Some(512.0));
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval_x(3.0), -9.0);
        assert_eq!(Expr::parse("1e-3*x").unwrap().eval_x(2.0), 2e-3);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "x +", "sin x", "(x", "y", "x $ 2", "1..2"] {
            assert!(Expr::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn derivatives_match_closed_forms() {
        let e = Expr::parse("log(1 + 0.5*sin(x))").unwrap();
        let x: f64 = 0.7;
        let g = 1.0 + 0.5 * x.sin();
        assert!((e.diff(Var::X).eval_x(x) - 0.5 * x.cos() / g).abs() < 1e-15);
        let d2 = -0.5 * x.sin() / g - 0.25 * x.cos().powi(2) / (g * g);
        assert!((e.diff_n(Var::X, 2).eval_x(x) - d2).abs() < 1e-14);
        let p = Expr::parse("x^x").unwrap();
        assert!((p.diff(Var::X).eval_x(2.0) - 4.0 * (2f64.ln() + 1.0)).abs() < 1e-13);
        let m = Expr::parse("x*q^2").unwrap();
        assert_eq!(m.diff(Var::Q).eval([3.0, 2.0, 0.0]), 12.0);
        assert!(m.diff(Var::T).is_zero());
    }

    #[test]
    fn log_of_exp_simplifies() {
        let e = Expr::parse("log(exp(x^2 + q))").unwrap();
        assert_eq!(e, Expr::parse("x^2 + q").unwrap());
        assert!(!e.depends_on(Var::T) && e.depends_on(Var::Q));
    }

    #[test]
    fn display_roundtrips() {
        let e = Expr::parse("sin(x)*exp(-q/2) - 3*x^2").unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        for p in [[0.3, -1.2, 0.0], [2.0, 0.5, 0.0]] {
            assert!((e.eval(p) - back.eval(p)).abs() < 1e-14);
        }
    }
}
