//! Scalar expressions used to define conformal factors and boundary data.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | '+' unary | power
//! power   := primary ('^' unary)?          (right associative)
//! primary := number | name | name '(' sum ')' | '(' sum ')'
//! ```
//!
//! so `-x^2` is `-(x^2)` and `2^-x^2` is `2^(-(x^2))`. The name `pi` is a
//! constant; every other bare name is a variable. Supported functions are
//! `exp log sin cos tan cot sqrt abs`.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },
    #[error("unknown function `{name}` at byte {position}")]
    UnknownFunction { name: String, position: usize },
    #[error("unknown variable `{name}`")]
    UnknownVariable { name: String },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Tan,
    Cot,
    Sqrt,
    Abs,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Exp,
        Func::Log,
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Cot,
        Func::Sqrt,
        Func::Abs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Cot => "cot",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Values are immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Parses `text` into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut parser = Parser::new(text)?;
    let expr = parser.sum()?;
    match parser.peek() {
        Token::End => Ok(expr),
        other => Err(parser.unexpected("operator or end of input", other)),
    }
}

/// Parses `text` and checks that every variable is one of `vars`.
pub fn parse_with_vars(text: &str, vars: &[&str]) -> Result<Expr, ExprError> {
    let expr = parse(text)?;
    expr.check_bindings(vars)?;
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Number(v) => format!("number {v}"),
            Token::Ident(s) => format!("name `{s}`"),
            Token::Op(c) => format!("`{c}`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::End => "end of input".into(),
        }
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self, ExprError> {
        Ok(Parser {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> Token {
        self.tokens[self.pos].0.clone()
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> Token {
        let tok = self.peek();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        tok
    }

    fn unexpected(&self, expected: &str, found: Token) -> ExprError {
        ExprError::Syntax {
            position: self.offset(),
            expected: expected.to_string(),
            found: found.describe(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Token::Op('+') => BinOp::Add,
                Token::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Token::Op('*') => BinOp::Mul,
                Token::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Token::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Token::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.primary()?;
        if self.peek() == Token::Op('^') {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        let start = self.offset();
        match self.bump() {
            Token::Number(v) => Ok(Expr::Const(v)),
            Token::Ident(name) => {
                if self.peek() == Token::LParen {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        position: start,
                    })?;
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else if name == "pi" {
                    Ok(Expr::Const(std::f64::consts::PI))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Token::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            other => {
                self.pos = self.pos.saturating_sub(usize::from(other != Token::End));
                Err(ExprError::Syntax {
                    position: start,
                    expected: "number, name or `(`".into(),
                    found: other.describe(),
                })
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Token::RParen => {
                self.bump();
                Ok(())
            }
            other => Err(self.unexpected("`)`", other)),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                out.push((Token::Op(c as char), i));
                i += 1;
            }
            b'(' => {
                out.push((Token::LParen, i));
                i += 1;
            }
            b')' => {
                out.push((Token::RParen, i));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
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
                let literal = &text[start..i];
                let value = literal.parse::<f64>().map_err(|_| ExprError::Syntax {
                    position: start,
                    expected: "numeric literal".into(),
                    found: format!("`{literal}`"),
                })?;
                out.push((Token::Number(value), start));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Ident(text[start..i].to_string()), start));
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ExprError::Syntax {
                    position: i,
                    expected: "number, name, operator or parenthesis".into(),
                    found: format!("`{ch}`"),
                });
            }
        }
    }
    out.push((Token::End, text.len()));
    Ok(out)
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Variable names appearing in the tree, sorted and deduplicated.
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expr, acc: &mut Vec<String>) {
            match e {
                Expr::Const(_) => {}
                Expr::Var(v) => acc.push(v.clone()),
                Expr::Neg(a) | Expr::Call(_, a) => walk(a, acc),
                Expr::Binary(_, a, b) => {
                    walk(a, acc);
                    walk(b, acc);
                }
            }
        }
        let mut acc = Vec::new();
        walk(self, &mut acc);
        acc.sort();
        acc.dedup();
        acc
    }

    pub fn check_bindings(&self, allowed: &[&str]) -> Result<(), ExprError> {
        match self
            .variables()
            .into_iter()
            .find(|v| !allowed.contains(&v.as_str()))
        {
            Some(name) => Err(ExprError::UnknownVariable { name }),
            None => Ok(()),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        self.eval_with(&|name| bindings.get(name).copied())
    }

    /// Evaluates with a single bound variable.
    pub fn eval_at(&self, var: &str, value: f64) -> Result<f64, ExprError> {
        self.eval_with(&|name| (name == var).then_some(value))
    }

    pub fn eval_with(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        let value = match self {
            Expr::Const(c) => *c,
            Expr::Var(name) => {
                lookup(name).ok_or_else(|| ExprError::UnknownVariable { name: name.clone() })?
            }
            Expr::Neg(a) => -a.eval_with(lookup)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval_with(lookup)?;
                let y = b.eval_with(lookup)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => {
                        if x < 0.0 && y.fract() != 0.0 {
                            return Err(self.domain("negative base with non-integer exponent"));
                        }
                        if x == 0.0 && y < 0.0 {
                            return Err(self.domain("zero raised to a negative power"));
                        }
                        x.powf(y)
                    }
                }
            }
            Expr::Call(f, a) => {
                let x = a.eval_with(lookup)?;
                match f {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(self.domain("logarithm of a non-positive number"));
                        }
                        x.ln()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Tan => {
                        if x.cos() == 0.0 {
                            return Err(self.domain("tangent at a pole"));
                        }
                        x.tan()
                    }
                    Func::Cot => {
                        let s = x.sin();
                        if s == 0.0 {
                            return Err(self.domain("cotangent at a pole"));
                        }
                        x.cos() / s
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain("square root of a negative number"));
                        }
                        x.sqrt()
                    }
                    Func::Abs => x.abs(),
                }
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, reason: &str) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            reason: reason.to_string(),
        }
    }

    /// Exact symbolic derivative with respect to `var`, folded for constants only.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(v) => Expr::Const(if v == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.differentiate(var)),
            Expr::Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                let (a, b) = (a.as_ref().clone(), b.as_ref().clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), pow(b, Expr::Const(2.0))),
                    BinOp::Pow => match (&b, &a) {
                        (Expr::Const(c), _) => mul(
                            mul(Expr::Const(*c), pow(a.clone(), Expr::Const(c - 1.0))),
                            da,
                        ),
                        (_, Expr::Const(base)) => {
                            mul(mul(self.clone(), Expr::Const(base.ln())), db)
                        }
                        _ => mul(
                            self.clone(),
                            add(
                                mul(db, call(Func::Log, a.clone())),
                                div(mul(b, da), a),
                            ),
                        ),
                    },
                }
            }
            Expr::Call(f, a) => {
                let da = a.differentiate(var);
                let a = a.as_ref().clone();
                let outer = match f {
                    Func::Exp => call(Func::Exp, a),
                    Func::Log => div(Expr::Const(1.0), a),
                    Func::Sin => call(Func::Cos, a),
                    Func::Cos => neg(call(Func::Sin, a)),
                    Func::Tan => add(Expr::Const(1.0), pow(call(Func::Tan, a), Expr::Const(2.0))),
                    Func::Cot => neg(add(Expr::Const(1.0), pow(call(Func::Cot, a), Expr::Const(2.0)))),
                    Func::Sqrt => div(Expr::Const(1.0), mul(Expr::Const(2.0), call(Func::Sqrt, a))),
                    Func::Abs => div(call(Func::Abs, a.clone()), a),
                };
                mul(outer, da)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }
}

fn fold(op: BinOp, a: f64, b: f64) -> Option<f64> {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div if b != 0.0 => a / b,
        BinOp::Pow if a > 0.0 || b.fract() == 0.0 => a.powf(b),
        _ => return None,
    };
    v.is_finite().then_some(v)
}

fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        if let Some(v) = fold(op, *x, *y) {
            return Expr::Const(v);
        }
    }
    Expr::Binary(op, Box::new(a), Box::new(b))
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(z), _) if *z == 0.0 => b,
        (_, Expr::Const(z)) if *z == 0.0 => a,
        _ => binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(z)) if *z == 0.0 => a,
        (Expr::Const(z), _) if *z == 0.0 => neg(b),
        _ => binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Const(z), _) | (_, Expr::Const(z)) if *z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), _) if *o == 1.0 => b,
        (_, Expr::Const(o)) if *o == 1.0 => a,
        _ => binary(BinOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Const(o)) if *o == 1.0 => a,
        _ => binary(BinOp::Div, a, b),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match &b {
        Expr::Const(o) if *o == 1.0 => a,
        Expr::Const(z) if *z == 0.0 => Expr::Const(1.0),
        _ => binary(BinOp::Pow, a, b),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    if let Expr::Const(c) = a {
        if let Ok(v) = Expr::Call(f, Box::new(Expr::Const(c))).eval_with(&|_| None) {
            return Expr::Const(v);
        }
    }
    Expr::Call(f, Box::new(a))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Const(c) if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) => {
                write!(f, "(-{})", -c)
            }
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                child(f, a, 3)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let (sym, left, right) = match op {
                    BinOp::Add => ("+", 1, 2),
                    BinOp::Sub => ("-", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                child(f, a, left)?;
                write!(f, "{sym}")?;
                child(f, b, right)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central_fd(e: &Expr, x: f64, h: f64) -> f64 {
        (e.eval_at("r", x + h).unwrap() - e.eval_at("r", x - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn parses_single_call() {
        assert_eq!(
            parse("exp(r)").unwrap(),
            Expr::Call(Func::Exp, Box::new(Expr::var("r")))
        );
    }

    #[test]
    fn parses_hyperbolic_metric_factor() {
        let e = parse("4*exp(2*r)/(1-exp(2*r))^2").unwrap();
        assert_eq!(e.variables(), vec!["r".to_string()]);
        let r: f64 = -0.7;
        let expected = 4.0 * (2.0 * r).exp() / (1.0 - (2.0 * r).exp()).powi(2);
        assert!((e.eval_at("r", r).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn unbalanced_paren_reports_position() {
        match parse("log(") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse("(r+1") {
            Err(ExprError::Syntax { position, expected, .. }) => {
                assert_eq!(position, 4);
                assert!(expected.contains(')'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_function_and_variable() {
        assert!(matches!(
            parse("sinh(r)"),
            Err(ExprError::UnknownFunction { position: 0, .. })
        ));
        assert!(matches!(
            parse_with_vars("r + s", &["r"]),
            Err(ExprError::UnknownVariable { .. })
        ));
        assert!(matches!(
            parse("r").unwrap().eval_at("x", 1.0),
            Err(ExprError::UnknownVariable { .. })
        ));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("-r^2").unwrap();
        assert_eq!(e.eval_at("r", 3.0).unwrap(), -9.0);
        let e = parse("2^3^2").unwrap();
        assert_eq!(e.eval_at("r", 0.0).unwrap(), 512.0);
        let e = parse("8/2/2 - 1 - 1").unwrap();
        assert_eq!(e.eval_at("r", 0.0).unwrap(), 0.0);
        let e = parse("2^-1").unwrap();
        assert_eq!(e.eval_at("r", 0.0).unwrap(), 0.5);
        let e = parse("1.5e-3*r + 2E1").unwrap();
        assert_eq!(e.eval_at("r", 1000.0).unwrap(), 21.5);
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(parse("exp(r)").unwrap().eval_at("r", 0.0).unwrap(), 1.0);
        let v = parse("2*exp(r)/(1-exp(2*r))").unwrap().eval_at("r", -1.0).unwrap();
        assert!((v - 0.850_918_128_239_321_6).abs() < 1e-12);
        let mut b = HashMap::new();
        b.insert("r".to_string(), 0.0);
        match parse("log(r)").unwrap().eval(&b) {
            Err(ExprError::Domain { subexpr, .. }) => assert_eq!(subexpr, "log(r)"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("1/(r-1)").unwrap().eval_at("r", 1.0),
            Err(ExprError::Domain { .. })
        ));
        assert!(matches!(
            parse("cot(r)").unwrap().eval_at("r", 0.0),
            Err(ExprError::Domain { .. })
        ));
    }

    #[test]
    fn derivative_examples() {
        let d = parse("exp(a*r)").unwrap().differentiate("r");
        let mut b = HashMap::new();
        b.insert("a".to_string(), 1.7);
        b.insert("r".to_string(), 0.3);
        assert!((d.eval(&b).unwrap() - 1.7 * (1.7f64 * 0.3).exp()).abs() < 1e-12);
        assert_eq!(parse("3.5").unwrap().differentiate("r"), Expr::Const(0.0));
        assert_eq!(parse("y^2").unwrap().differentiate("r"), Expr::Const(0.0));

        let hyp = parse("2*exp(r)/(1-exp(2*r))").unwrap();
        let d = hyp.differentiate("r").eval_at("r", -1.0).unwrap();
        let fd = central_fd(&hyp, -1.0, 1e-5);
        assert!(((d - fd) / fd).abs() < 1e-8, "{d} vs {fd}");
    }

    #[test]
    fn second_derivative_by_repetition() {
        let e = parse("sin(r)*r^3").unwrap();
        let d2 = e.differentiate("r").differentiate("r");
        let r: f64 = 0.8;
        let exact = -r.sin() * r.powi(3) + 6.0 * r.cos() * r * r + 6.0 * r * r.sin();
        assert!((d2.eval_at("r", r).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn every_function_differentiates() {
        for f in Func::ALL {
            let e = parse(&format!("{}(0.3*r+0.9)", f.name())).unwrap();
            let d = e.differentiate("r").eval_at("r", 0.2).unwrap();
            let fd = central_fd(&e, 0.2, 1e-5);
            assert!((d - fd).abs() <= 1e-8 * (1.0 + fd.abs()), "{}: {d} vs {fd}", f.name());
        }
        let e = parse("r^r").unwrap();
        let d = e.differentiate("r").eval_at("r", 1.3).unwrap();
        assert!((d - central_fd(&e, 1.3, 1e-5)).abs() < 1e-8);
        let e = parse("2^r").unwrap();
        let d = e.differentiate("r").eval_at("r", 1.3).unwrap();
        assert!((d - 2f64.powf(1.3) * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn print_round_trip_examples() {
        for text in [
            "4*exp(2*r)/(1-exp(2*r))^2",
            "-r^2",
            "a-(b-c)",
            "(a-b)-c",
            "a/(b*c)",
            "(2^3)^2",
            "2^-r",
            "-(a+b)*c",
            "--r",
            "cot(pi/4)+abs(-r)",
        ] {
            let once = parse(text).unwrap();
            let twice = parse(&once.to_string()).unwrap();
            assert_eq!(once, twice, "{text} -> {once}");
        }
    }
}
