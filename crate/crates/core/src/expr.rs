//! Restricted right-hand-side language for user-supplied systems:
//! polynomial and trigonometric expressions over named variables, with
//! symbolic differentiation. Keeping the language small is what makes the
//! Jacobians and curvature terms of custom systems exact rather than
//! finite-differenced.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Integer powers only; differentiation stays in the language.
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

use Expr::*;

impl Expr {
    pub fn eval(&self, env: &HashMap<String, f64>) -> Result<f64> {
        Ok(match self {
            Num(c) => *c,
            Var(name) => *env
                .get(name)
                .ok_or_else(|| Error::Config(format!("unbound variable '{name}'")))?,
            Add(a, b) => a.eval(env)? + b.eval(env)?,
            Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Div(a, b) => a.eval(env)? / b.eval(env)?,
            Neg(a) => -a.eval(env)?,
            Pow(a, k) => a.eval(env)?.powi(*k),
            Sin(a) => a.eval(env)?.sin(),
            Cos(a) => a.eval(env)?.cos(),
        })
    }

    /// Partial derivative with respect to `var`, with light constant folding
    /// so repeated differentiation does not blow up.
    pub fn diff(&self, var: &str) -> Expr {
        match self {
            Num(_) => Num(0.0),
            Var(name) => Num(if name == var { 1.0 } else { 0.0 }),
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                Pow(b.clone(), 2),
            ),
            Neg(a) => neg(a.diff(var)),
            Pow(a, k) => mul(
                mul(Num(*k as f64), pow((**a).clone(), k - 1)),
                a.diff(var),
            ),
            Sin(a) => mul(Cos(a.clone()), a.diff(var)),
            Cos(a) => neg(mul(Sin(a.clone()), a.diff(var))),
        }
    }

    pub fn free_vars(&self, out: &mut Vec<String>) {
        match self {
            Num(_) => {}
            Var(name) => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            Neg(a) | Sin(a) | Cos(a) => a.free_vars(out),
            Pow(a, _) => a.free_vars(out),
        }
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(x), _) if *x == 0.0 => b,
        (_, Num(y)) if *y == 0.0 => a,
        _ => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x - y),
        (_, Num(y)) if *y == 0.0 => a,
        (Num(x), _) if *x == 0.0 => neg(b),
        _ => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(x), _) if *x == 0.0 => Num(0.0),
        (_, Num(y)) if *y == 0.0 => Num(0.0),
        (Num(x), _) if *x == 1.0 => b,
        (_, Num(y)) if *y == 1.0 => a,
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Num(x), _) if *x == 0.0 => Num(0.0),
        (_, Num(y)) if *y == 1.0 => a,
        (Num(x), Num(y)) if *y != 0.0 => Num(x / y),
        _ => Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(x) => Num(-x),
        Neg(inner) => *inner,
        _ => Neg(Box::new(a)),
    }
}

fn pow(a: Expr, k: i32) -> Expr {
    match k {
        0 => Num(1.0),
        1 => a,
        _ => Pow(Box::new(a), k),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(c) => write!(f, "{c}"),
            Var(n) => write!(f, "{n}"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Neg(a) => write!(f, "(-{a})"),
            Pow(a, k) => write!(f, "({a}^{k})"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Grammar:
///   expr   := term (('+' | '-') term)*
///   term   := factor (('*' | '/') factor)*
///   factor := '-' factor | atom ('^' int)?
///   atom   := number | ident | ident '(' expr ')' | '(' expr ')'
pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("expression parse error at byte {}: {msg}", self.pos))
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

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                lhs = Mul(Box::new(lhs), Box::new(self.factor()?));
            } else if self.eat(b'/') {
                lhs = Div(Box::new(lhs), Box::new(self.factor()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            // unary minus binds looser than the exponent: -x^2 = -(x^2)
            return Ok(Neg(Box::new(self.factor()?)));
        }
        let base = self.atom()?;
        if self.eat(b'^') {
            let neg_exp = self.eat(b'-');
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.err("expected integer exponent"));
            }
            let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let mut k: i32 = digits
                .parse()
                .map_err(|_| self.err("exponent out of range"))?;
            if neg_exp {
                k = -k;
            }
            return Ok(Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .to_string();
                match name.as_str() {
                    "sin" | "cos" => {
                        if !self.eat(b'(') {
                            return Err(self.err("expected '(' after function name"));
                        }
                        let arg = Box::new(self.expr()?);
                        if !self.eat(b')') {
                            return Err(self.err("expected ')'"));
                        }
                        Ok(if name == "sin" { Sin(arg) } else { Cos(arg) })
                    }
                    "pi" => Ok(Num(std::f64::consts::PI)),
                    _ => Ok(Var(name)),
                }
            }
            _ => Err(self.err("expected a number, variable, or '('")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'e'
                || self.src[self.pos] == b'E'
                || ((self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                    && self.pos > start
                    && (self.src[self.pos - 1] == b'e' || self.src[self.pos - 1] == b'E')))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map(Num)
            .map_err(|_| self.err("malformed number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn parse_and_eval() {
        let e = parse_expr("-x1^2 + 3 * sin(2*x2) - 1/2").unwrap();
        let v = e.eval(&env(&[("x1", 2.0), ("x2", 0.25)])).unwrap();
        assert!((v - (-4.0 + 3.0 * 0.5f64.sin() - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("2 - 3 - 4").unwrap();
        assert_eq!(e.eval(&env(&[])).unwrap(), -5.0);
        let e = parse_expr("2 + 3 * 4 ^ 2").unwrap();
        assert_eq!(e.eval(&env(&[])).unwrap(), 50.0);
        let e = parse_expr("-x^2").unwrap();
        // unary minus binds looser than the exponent
        assert_eq!(e.eval(&env(&[("x", 3.0)])).unwrap(), -9.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let e = parse_expr("sin(x*y) * x^3 - cos(y)/x + y^-2").unwrap();
        let dx = e.diff("x");
        let dy = e.diff("y");
        let (x0, y0) = (1.3, 0.7);
        let h = 1e-6;
        for (d, var) in [(&dx, "x"), (&dy, "y")] {
            let mut ep = env(&[("x", x0), ("y", y0)]);
            let mut em = ep.clone();
            *ep.get_mut(var).unwrap() += h;
            *em.get_mut(var).unwrap() -= h;
            let fd = (e.eval(&ep).unwrap() - e.eval(&em).unwrap()) / (2.0 * h);
            let an = d.eval(&env(&[("x", x0), ("y", y0)])).unwrap();
            assert!((fd - an).abs() < 1e-8, "{var}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn second_derivatives_stay_small() {
        // repeated differentiation must not explode thanks to folding
        let mut e = parse_expr("sin(x)*cos(x)*x^4").unwrap();
        for _ in 0..4 {
            e = e.diff("x");
        }
        assert!(format!("{e}").len() < 4000);
        let v = e.eval(&env(&[("x", 0.5)])).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_expr("x +").is_err());
        assert!(parse_expr("(x").is_err());
        assert!(parse_expr("x^y").is_err());
        assert!(parse_expr("2..5").is_err());
        assert!(parse_expr("x 3").is_err());
        let e = parse_expr("q1 * 2").unwrap();
        assert!(e.eval(&env(&[])).is_err());
    }

    #[test]
    fn free_variables_in_order() {
        let e = parse_expr("u1 + x2*sin(x1) - x2").unwrap();
        let mut vs = Vec::new();
        e.free_vars(&mut vs);
        assert_eq!(vs, vec!["u1", "x2", "x1"]);
    }
}
