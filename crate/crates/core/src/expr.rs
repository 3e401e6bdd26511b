//! Arithmetic expressions over `t`, `q1..qn` and `u1..um`.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?          right associative
//! atom    := number | ident | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! so `-q1^2` reads as `-(q1^2)` and `2^3^2` as `2^(3^2)`. Only functions
//! that are continuously differentiable on their domain are accepted.

use std::fmt;

use crate::dual::{Dual, Scalar};

/// A variable reference. Indices are zero-based (`q1` is `State(0)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    Time,
    State(usize),
    Control(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }
}

const NON_SMOOTH: &[&str] = &[
    "abs", "floor", "ceil", "round", "sign", "sgn", "min", "max", "trunc", "fract",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} exceeds the declared dimension {dim}")]
    IndexOutOfRange {
        name: String,
        offset: usize,
        dim: usize,
    },
    #[error("function `{name}` at byte {offset} is not continuously differentiable")]
    NonSmoothFunction { name: String, offset: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownIdentifier { offset, .. }
            | ParseError::IndexOutOfRange { offset, .. }
            | ParseError::NonSmoothFunction { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("variable {0:?} is not bound at this evaluation point")]
    Unbound(Var),
}

/// Which block of variables to differentiate with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wrt {
    State,
    Control,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{lit}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: start,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    n: usize,
    m: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(name, offset),
            Tok::End => Err(ParseError::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            other => Err(ParseError::Syntax {
                offset,
                message: format!("unexpected token {}", describe(&other)),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        let offset = self.offset();
        match self.bump().0 {
            Tok::RParen => Ok(()),
            other => Err(ParseError::Syntax {
                offset,
                message: format!("expected `)`, found {}", describe(&other)),
            }),
        }
    }

    fn identifier(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        if let Some(func) = Func::from_name(&name) {
            let lp = self.offset();
            if self.bump().0 != Tok::LParen {
                return Err(ParseError::Syntax {
                    offset: lp,
                    message: format!("expected `(` after `{name}`"),
                });
            }
            let arg = self.sum()?;
            self.expect_rparen()?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        if NON_SMOOTH.contains(&name.as_str()) {
            return Err(ParseError::NonSmoothFunction { name, offset });
        }
        if name == "t" {
            return Ok(Expr::Var(Var::Time));
        }
        let (prefix, digits) = name.split_at(1);
        let index = if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
            digits.parse::<usize>().ok()
        } else {
            None
        };
        match (prefix, index) {
            ("q", Some(i)) => {
                if i == 0 || i > self.n {
                    Err(ParseError::IndexOutOfRange {
                        name,
                        offset,
                        dim: self.n,
                    })
                } else {
                    Ok(Expr::Var(Var::State(i - 1)))
                }
            }
            ("u", Some(i)) => {
                if i == 0 || i > self.m {
                    Err(ParseError::IndexOutOfRange {
                        name,
                        offset,
                        dim: self.m,
                    })
                } else {
                    Ok(Expr::Var(Var::Control(i - 1)))
                }
            }
            _ => Err(ParseError::UnknownIdentifier { name, offset }),
        }
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Slash => "`/`".into(),
        Tok::Caret => "`^`".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

/// Parses `text` with `n` state and `m` control variables in scope.
pub fn parse_expression(text: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, n, m };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        let tok = p.peek().clone();
        return Err(ParseError::Syntax {
            offset: p.offset(),
            message: format!("unexpected trailing {}", describe(&tok)),
        });
    }
    Ok(e)
}

/// Variable bindings for one evaluation.
pub struct Point<'a, S> {
    pub q: &'a [S],
    pub u: &'a [S],
    pub t: S,
}

fn checked<S: Scalar>(v: S, what: &str) -> Result<S, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite(what.to_string()))
    }
}

impl Expr {
    pub fn parse(text: &str, n: usize, m: usize) -> Result<Expr, ParseError> {
        parse_expression(text, n, m)
    }

    /// Evaluates over any [`Scalar`], reporting domain violations and
    /// non-finite intermediates.
    pub fn eval_scalar<S: Scalar>(&self, at: &Point<'_, S>) -> Result<S, EvalError> {
        match self {
            Expr::Num(v) => Ok(S::from_f64(*v)),
            Expr::Var(var) => match var {
                Var::Time => Ok(at.t),
                Var::State(i) => at.q.get(*i).copied().ok_or(EvalError::Unbound(*var)),
                Var::Control(i) => at.u.get(*i).copied().ok_or(EvalError::Unbound(*var)),
            },
            Expr::Neg(a) => Ok(-a.eval_scalar(at)?),
            Expr::Add(a, b) => checked(a.eval_scalar(at)? + b.eval_scalar(at)?, "addition"),
            Expr::Sub(a, b) => checked(a.eval_scalar(at)? - b.eval_scalar(at)?, "subtraction"),
            Expr::Mul(a, b) => checked(a.eval_scalar(at)? * b.eval_scalar(at)?, "multiplication"),
            Expr::Div(a, b) => {
                let num = a.eval_scalar(at)?;
                let den = b.eval_scalar(at)?;
                if den.re() == 0.0 {
                    return Err(EvalError::NonFinite("division by zero".into()));
                }
                checked(num / den, "division")
            }
            Expr::Pow(a, b) => {
                let base = a.eval_scalar(at)?;
                let exponent = b.eval_scalar(at)?;
                pow(base, exponent)
            }
            Expr::Call(f, a) => {
                let x = a.eval_scalar(at)?;
                let y = match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Tanh => x.tanh(),
                    Func::Log => {
                        if x.re() <= 0.0 {
                            return Err(EvalError::Domain(format!(
                                "log of non-positive value {}",
                                x.re()
                            )));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x.re() < 0.0 {
                            return Err(EvalError::Domain(format!(
                                "sqrt of negative value {}",
                                x.re()
                            )));
                        }
                        x.sqrt()
                    }
                };
                checked(y, f.name())
            }
        }
    }

    pub fn eval(&self, q: &[f64], u: &[f64], t: f64) -> Result<f64, EvalError> {
        self.eval_scalar(&Point { q, u, t })
    }

    /// Partial derivatives with respect to every state or every control
    /// variable, one dual-number sweep per variable.
    pub fn differentiate(
        &self,
        wrt: Wrt,
        q: &[f64],
        u: &[f64],
        t: f64,
    ) -> Result<Vec<f64>, EvalError> {
        let mut qd: Vec<Dual> = q.iter().map(|&v| Dual::constant(v)).collect();
        let mut ud: Vec<Dual> = u.iter().map(|&v| Dual::constant(v)).collect();
        let td = Dual::constant(t);
        let count = match wrt {
            Wrt::State => q.len(),
            Wrt::Control => u.len(),
        };
        let mut out = Vec::with_capacity(count);
        for k in 0..count {
            let slot = match wrt {
                Wrt::State => &mut qd[k],
                Wrt::Control => &mut ud[k],
            };
            slot.eps = 1.0;
            let r = self.eval_scalar(&Point {
                q: &qd,
                u: &ud,
                t: td,
            });
            match wrt {
                Wrt::State => qd[k].eps = 0.0,
                Wrt::Control => ud[k].eps = 0.0,
            }
            out.push(r?.eps);
        }
        Ok(out)
    }

    /// Visits every variable reference.
    pub fn for_each_var(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) | Expr::Call(_, a) => a.for_each_var(f),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    pub fn uses_control(&self) -> bool {
        let mut found = false;
        self.for_each_var(&mut |v| found |= matches!(v, Var::Control(_)));
        found
    }
}

fn pow<S: Scalar>(base: S, exponent: S) -> Result<S, EvalError> {
    let y = exponent.re();
    let v = if exponent.is_constant() {
        if y.fract() == 0.0 && y.abs() <= f64::from(i32::MAX) {
            base.powi(y as i32)
        } else {
            if base.re() < 0.0 {
                return Err(EvalError::Domain(format!(
                    "negative base {} raised to non-integer power {y}",
                    base.re()
                )));
            }
            base.powf(y)
        }
    } else {
        if base.re() <= 0.0 {
            return Err(EvalError::Domain(format!(
                "non-positive base {} raised to a variable power",
                base.re()
            )));
        }
        base.pow(exponent)
    };
    checked(v, "power")
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Time => write!(f, "t"),
            Var::State(i) => write!(f, "q{}", i + 1),
            Var::Control(i) => write!(f, "u{}", i + 1),
        }
    }
}

/// Fully parenthesised, so printing then parsing gives back the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn precedence_of_sum_and_product() {
        let e = parse_expression("q1 + 2*u1", 1, 1).unwrap();
        assert_eq!(
            e,
            Expr::Add(
                b(Expr::Var(Var::State(0))),
                b(Expr::Mul(b(Expr::Num(2.0)), b(Expr::Var(Var::Control(0)))))
            )
        );
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = parse_expression("-q1^2", 1, 1).unwrap();
        assert_eq!(
            e,
            Expr::Neg(b(Expr::Pow(b(Expr::Var(Var::State(0))), b(Expr::Num(2.0)))))
        );
    }

    #[test]
    fn power_is_right_associative() {
        let e = parse_expression("2^3^2", 1, 1).unwrap();
        assert_eq!(e.eval(&[0.0], &[0.0], 0.0).unwrap(), 512.0);
        let e = parse_expression("2^-1", 1, 1).unwrap();
        assert_eq!(e.eval(&[0.0], &[0.0], 0.0).unwrap(), 0.5);
    }

    #[test]
    fn state_index_beyond_dimension() {
        let err = parse_expression("q3", 2, 1).unwrap_err();
        assert!(matches!(err, ParseError::IndexOutOfRange { ref name, dim: 2, .. } if name == "q3"));
        assert!(matches!(
            parse_expression("u0", 1, 1),
            Err(ParseError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn errors_carry_offsets() {
        let err = parse_expression("q1 + * 2", 1, 1).unwrap_err();
        assert_eq!(err.offset(), 5);
        let err = parse_expression("q1 + w", 1, 1).unwrap_err();
        assert_eq!(
            err,
            ParseError::UnknownIdentifier {
                name: "w".into(),
                offset: 5
            }
        );
        assert!(matches!(
            parse_expression("(q1", 1, 1),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
        assert!(matches!(
            parse_expression("q1 $", 1, 1),
            Err(ParseError::Syntax { offset: 3, .. })
        ));
    }

    #[test]
    fn non_smooth_functions_rejected() {
        for text in ["abs(q1)", "floor(t)"] {
            assert!(matches!(
                parse_expression(text, 1, 1),
                Err(ParseError::NonSmoothFunction { offset: 0, .. })
            ));
        }
    }

    #[test]
    fn evaluation_examples() {
        let e = parse_expression("sin(t)", 1, 1).unwrap();
        assert_eq!(e.eval(&[0.0], &[0.0], 0.0).unwrap(), 0.0);
        let e = parse_expression("q1*u1", 1, 1).unwrap();
        assert_eq!(e.eval(&[2.0], &[3.0], 0.0).unwrap(), 6.0);
        let e = parse_expression("exp(q1)", 1, 1).unwrap();
        assert!((e.eval(&[1.0], &[0.0], 0.0).unwrap() - std::f64::consts::E).abs() < 1e-12);
        let e = parse_expression("1.5e-3 * 2E2", 1, 1).unwrap();
        assert!((e.eval(&[0.0], &[0.0], 0.0).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn domain_and_overflow_errors() {
        let log = parse_expression("log(q1)", 1, 1).unwrap();
        assert!(matches!(log.eval(&[0.0], &[0.0], 0.0), Err(EvalError::Domain(_))));
        let sqrt = parse_expression("sqrt(q1)", 1, 1).unwrap();
        assert!(matches!(sqrt.eval(&[-1.0], &[0.0], 0.0), Err(EvalError::Domain(_))));
        let big = parse_expression("exp(q1)", 1, 1).unwrap();
        assert!(matches!(big.eval(&[1000.0], &[0.0], 0.0), Err(EvalError::NonFinite(_))));
        let frac = parse_expression("q1^0.5", 1, 1).unwrap();
        assert!(matches!(frac.eval(&[-4.0], &[0.0], 0.0), Err(EvalError::Domain(_))));
        let div = parse_expression("1/q1", 1, 1).unwrap();
        assert!(matches!(div.eval(&[0.0], &[0.0], 0.0), Err(EvalError::NonFinite(_))));
    }

    #[test]
    fn negative_base_integer_power() {
        let e = parse_expression("q1^3", 1, 1).unwrap();
        assert_eq!(e.eval(&[-2.0], &[0.0], 0.0).unwrap(), -8.0);
        let d = e.differentiate(Wrt::State, &[-2.0], &[0.0], 0.0).unwrap();
        assert_eq!(d, vec![12.0]);
    }

    #[test]
    fn derivative_examples() {
        let e = parse_expression("q1^2", 1, 1).unwrap();
        assert_eq!(e.differentiate(Wrt::State, &[3.0], &[0.0], 0.0).unwrap(), vec![6.0]);
        let e = parse_expression("q1", 1, 1).unwrap();
        assert_eq!(e.differentiate(Wrt::Control, &[3.0], &[1.0], 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let e = parse_expression("sin(q1*u1)", 1, 1).unwrap();
        let (q, u) = (0.7, 1.3);
        let ad = e.differentiate(Wrt::State, &[q], &[u], 0.0).unwrap()[0];
        let step = 1e-6;
        let fd = (e.eval(&[q + step], &[u], 0.0).unwrap() - e.eval(&[q - step], &[u], 0.0).unwrap())
            / (2.0 * step);
        assert!(((ad - fd) / fd).abs() < 1e-6);
        assert!((ad - u * (q * u).cos()).abs() < 1e-14);
    }

    #[test]
    fn variable_exponent() {
        let e = parse_expression("q1^u1", 1, 1).unwrap();
        let d = e.differentiate(Wrt::Control, &[2.0], &[3.0], 0.0).unwrap()[0];
        assert!((d - 8.0 * 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            e.differentiate(Wrt::Control, &[-2.0], &[3.0], 0.0),
            Err(EvalError::Domain(_))
        ));
    }

    #[test]
    fn display_round_trips() {
        for text in ["-q1^2 + 3*u1/(t - 1)", "exp(-t)*q2^-2", "2^3^2", "(-1.5e-7)*sqrt(q1)"] {
            let e = parse_expression(text, 2, 1).unwrap();
            let again = parse_expression(&e.to_string(), 2, 1).unwrap();
            assert_eq!(e, again, "{text} -> {e}");
        }
    }

    #[test]
    fn control_usage() {
        assert!(parse_expression("q1 + u1", 1, 1).unwrap().uses_control());
        assert!(!parse_expression("q1 * t", 1, 1).unwrap().uses_control());
    }
}
