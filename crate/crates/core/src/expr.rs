//! Symbolic expressions over named real variables.
//!
//! Every chart map, height function and sweep field read from a scene file is
//! an [`Expr`]. The grammar is small on purpose:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := '-' factor | base ('^' nonneg-integer)?
//! base   := number | identifier | identifier '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus and chains right-associatively.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Reserved name of the sweep time variable.
pub const TIME_VAR: &str = "t";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("unknown variable '{0}'")]
    UnknownVariable(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Exp => Ok(x.exp()),
            Func::Sqrt if x < 0.0 => Err(ExprError::Domain(format!("sqrt of negative value {x}"))),
            Func::Sqrt => Ok(x.sqrt()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for [`Expr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for HashMap<&str, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|&(_, v)| v)
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

// Smart constructors. These perform the purely syntactic simplifications
// (constant folding and identity elimination) used by `diff`.
impl Expr {
    pub fn num(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(v)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::Const(x * y),
            (Some(x), _) if x == 0.0 => Expr::Const(0.0),
            (_, Some(y)) if y == 0.0 => Expr::Const(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 => Expr::Const(x / y),
            (Some(x), _) if x == 0.0 && !b.is_const(0.0) => Expr::Const(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn powi(a: Expr, n: u32) -> Expr {
        match (n, a.as_const()) {
            (0, _) => Expr::Const(1.0),
            (1, _) => a,
            (_, Some(c)) => Expr::Const(c.powi(n as i32)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        if let Some(c) = a.as_const() {
            if let Ok(v) = f.apply(c) {
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
        }
        Expr::Call(f, Box::new(a))
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Parse an expression string.
pub fn parse(text: &str) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text, bytes: text.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.bytes.len() {
        return Err(p.error(format!("unexpected '{}'", p.peek_char())));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.into() }
    }

    fn peek_char(&self) -> char {
        self.src[self.pos..].chars().next().unwrap_or('\0')
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        let base = self.base()?;
        if self.peek() != Some(b'^') {
            return Ok(base);
        }
        let mut exponents = Vec::new();
        while self.peek() == Some(b'^') {
            self.pos += 1;
            exponents.push(self.exponent()?);
        }
        // a^b^c = a^(b^c)
        let start = self.pos;
        let mut n: u32 = exponents.pop().expect("at least one exponent");
        while let Some(e) = exponents.pop() {
            n = e.checked_pow(n).ok_or(ExprError::Syntax {
                offset: start,
                message: "exponent overflow".into(),
            })?;
        }
        Ok(Expr::Pow(Box::new(base), n))
    }

    fn exponent(&mut self) -> Result<u32, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected non-negative integer exponent"));
        }
        self.src[start..self.pos].parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: "exponent out of range".into(),
        })
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if self.peek() == Some(b'(') {
                    let func = Func::from_name(name).ok_or_else(|| ExprError::UnknownFunction {
                        name: name.to_string(),
                        offset: start,
                    })?;
                    self.pos += 1;
                    let arg = self.expr()?;
                    if self.peek() != Some(b')') {
                        return Err(self.error("expected ')'"));
                    }
                    self.pos += 1;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else {
                    Ok(Expr::Var(name.to_string()))
                }
            }
            Some(_) => Err(self.error(format!("unexpected '{}'", self.peek_char()))),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut mantissa = digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            mantissa += digits(self);
        }
        if mantissa == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                self.pos = save;
                return Err(self.error("malformed exponent"));
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number '{text}'"),
        })?;
        if !value.is_finite() {
            return Err(ExprError::Syntax { offset: start, message: "number out of range".into() });
        }
        Ok(Expr::Const(value))
    }
}

impl Expr {
    /// Names of all variables in the tree.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
        }
    }

    /// Fails with `UnknownVariable` for the first variable not in `allowed`.
    pub fn check_vars(&self, allowed: &[&str]) -> Result<(), ExprError> {
        match self.vars().into_iter().find(|v| !allowed.contains(&v.as_str())) {
            Some(v) => Err(ExprError::UnknownVariable(v)),
            None => Ok(()),
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => v == name,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on(name) || b.depends_on(name)
            }
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(name),
        }
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, ExprError> {
        Ok(match self {
            Expr::Const(c) => *c,
            Expr::Var(v) => env.lookup(v).ok_or_else(|| ExprError::UnknownVariable(v.clone()))?,
            Expr::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Expr::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Expr::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Expr::Div(a, b) => {
                let num = a.eval(env)?;
                let den = b.eval(env)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                num / den
            }
            Expr::Pow(a, n) => a.eval(env)?.powi(*n as i32),
            Expr::Neg(a) => -a.eval(env)?,
            Expr::Call(f, a) => f.apply(a.eval(env)?)?,
        })
    }

    /// Exact partial derivative with respect to `v`.
    pub fn diff(&self, v: &str) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var(name) => Expr::Const(if name == v { 1.0 } else { 0.0 }),
            Expr::Add(a, b) => Expr::add(a.diff(v), b.diff(v)),
            Expr::Sub(a, b) => Expr::sub(a.diff(v), b.diff(v)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(v), (**b).clone()),
                Expr::mul((**a).clone(), b.diff(v)),
            ),
            Expr::Div(a, b) => {
                let da = a.diff(v);
                let db = b.diff(v);
                if db.is_const(0.0) {
                    return Expr::div(da, (**b).clone());
                }
                Expr::div(
                    Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                    Expr::powi((**b).clone(), 2),
                )
            }
            Expr::Pow(a, n) => match n {
                0 => Expr::Const(0.0),
                _ => Expr::mul(
                    Expr::mul(Expr::Const(*n as f64), Expr::powi((**a).clone(), n - 1)),
                    a.diff(v),
                ),
            },
            Expr::Neg(a) => Expr::neg(a.diff(v)),
            Expr::Call(f, a) => {
                let da = a.diff(v);
                if da.is_const(0.0) {
                    return Expr::Const(0.0);
                }
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, inner),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, inner)),
                    Func::Exp => Expr::call(Func::Exp, inner),
                    Func::Sqrt => {
                        return Expr::div(da, Expr::mul(Expr::Const(2.0), Expr::call(Func::Sqrt, inner)))
                    }
                };
                Expr::mul(outer, da)
            }
        }
    }

    /// Replace variables by expressions; unmapped variables are kept.
    pub fn substitute(&self, map: &HashMap<String, Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => map.get(v).cloned().unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Add(a, b) => Expr::add(a.substitute(map), b.substitute(map)),
            Expr::Sub(a, b) => Expr::sub(a.substitute(map), b.substitute(map)),
            Expr::Mul(a, b) => Expr::mul(a.substitute(map), b.substitute(map)),
            Expr::Div(a, b) => Expr::div(a.substitute(map), b.substitute(map)),
            Expr::Pow(a, n) => Expr::powi(a.substitute(map), *n),
            Expr::Neg(a) => Expr::neg(a.substitute(map)),
            Expr::Call(f, a) => Expr::call(*f, a.substitute(map)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Const(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Const(_) | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "-{}", -c),
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)
            }
            Expr::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)
            }
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)
            }
            Expr::Pow(a, n) => {
                a.fmt_prec(f, 5)?;
                write!(f, "^{n}")
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Op {
    Const(u64),
    Input(u32),
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Powi(u32, u32),
    Call(Func, u32),
}

/// A batch of expressions flattened into a straight-line register program with
/// common subexpressions shared. Inputs are bound by position.
#[derive(Debug, Clone)]
pub struct Program {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    n_inputs: usize,
}

impl Program {
    pub fn compile(exprs: &[Expr], inputs: &[&str]) -> Result<Program, ExprError> {
        let mut builder = ProgramBuilder { ops: Vec::new(), index: HashMap::new(), inputs };
        let outputs = exprs.iter().map(|e| builder.emit(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(Program { ops: builder.ops, outputs, n_inputs: inputs.len() })
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Evaluate into `out`; `regs` is scratch space reused across calls.
    pub fn eval(&self, inputs: &[f64], regs: &mut Vec<f64>, out: &mut [f64]) -> Result<(), ExprError> {
        debug_assert_eq!(inputs.len(), self.n_inputs);
        regs.clear();
        regs.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(bits) => f64::from_bits(bits),
                Op::Input(i) => inputs[i as usize],
                Op::Add(a, b) => regs[a as usize] + regs[b as usize],
                Op::Sub(a, b) => regs[a as usize] - regs[b as usize],
                Op::Mul(a, b) => regs[a as usize] * regs[b as usize],
                Op::Div(a, b) => {
                    let den = regs[b as usize];
                    if den == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    regs[a as usize] / den
                }
                Op::Neg(a) => -regs[a as usize],
                Op::Powi(a, n) => regs[a as usize].powi(n as i32),
                Op::Call(f, a) => f.apply(regs[a as usize])?,
            };
            regs.push(v);
        }
        for (o, &r) in out.iter_mut().zip(&self.outputs) {
            *o = regs[r as usize];
        }
        Ok(())
    }

    pub fn eval_vec(&self, inputs: &[f64]) -> Result<Vec<f64>, ExprError> {
        let mut regs = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval(inputs, &mut regs, &mut out)?;
        Ok(out)
    }
}

struct ProgramBuilder<'a> {
    ops: Vec<Op>,
    index: HashMap<Op, u32>,
    inputs: &'a [&'a str],
}

impl ProgramBuilder<'_> {
    fn push(&mut self, op: Op) -> u32 {
        if let Some(&r) = self.index.get(&op) {
            return r;
        }
        let r = self.ops.len() as u32;
        self.ops.push(op);
        self.index.insert(op, r);
        r
    }

    fn emit(&mut self, e: &Expr) -> Result<u32, ExprError> {
        let op = match e {
            Expr::Const(c) => Op::Const(c.to_bits()),
            Expr::Var(v) => {
                let i = self
                    .inputs
                    .iter()
                    .position(|n| n == v)
                    .ok_or_else(|| ExprError::UnknownVariable(v.clone()))?;
                Op::Input(i as u32)
            }
            Expr::Add(a, b) => Op::Add(self.emit(a)?, self.emit(b)?),
            Expr::Sub(a, b) => Op::Sub(self.emit(a)?, self.emit(b)?),
            Expr::Mul(a, b) => Op::Mul(self.emit(a)?, self.emit(b)?),
            Expr::Div(a, b) => Op::Div(self.emit(a)?, self.emit(b)?),
            Expr::Neg(a) => Op::Neg(self.emit(a)?),
            Expr::Pow(a, n) => Op::Powi(self.emit(a)?, *n),
            Expr::Call(f, a) => Op::Call(*f, self.emit(a)?),
        };
        Ok(self.push(op))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn parses_product() {
        assert_eq!(p("x*y"), Expr::Mul(Box::new(Expr::var("x")), Box::new(Expr::var("y"))));
    }

    #[test]
    fn power_of_constants() {
        let env: [(&str, f64); 0] = [];
        assert_eq!(p("2^3").eval(&env).unwrap(), 8.0);
        assert_eq!(p("2^3^2").eval(&env).unwrap(), 512.0);
        assert_eq!(p("-2^2").eval(&env).unwrap(), -4.0);
        assert_eq!(p("(-2)^2").eval(&env).unwrap(), 4.0);
    }

    #[test]
    fn precedence_and_associativity() {
        let env = [("x", 2.0), ("y", 3.0)];
        assert_eq!(p("1 - x - y").eval(&env).unwrap(), -4.0);
        assert_eq!(p("12 / x / y").eval(&env).unwrap(), 2.0);
        assert_eq!(p("1 + x*y^2").eval(&env).unwrap(), 19.0);
        assert_eq!(p("-x*y").eval(&env).unwrap(), -6.0);
        assert_eq!(p("1.5e1 + .5").eval(&env).unwrap(), 15.5);
    }

    #[test]
    fn syntax_error_offset() {
        match parse("x*(") {
            Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        assert!(matches!(parse("x y"), Err(ExprError::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x^-1"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("1e400"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn unknown_function_and_variable() {
        assert!(matches!(parse("tan(x)"), Err(ExprError::UnknownFunction { offset: 0, .. })));
        let e = p("x + q");
        assert_eq!(e.check_vars(&["x", "t"]), Err(ExprError::UnknownVariable("q".into())));
        assert!(matches!(e.eval(&[("x", 1.0)]), Err(ExprError::UnknownVariable(_))));
    }

    #[test]
    fn diff_examples() {
        assert_eq!(p("x*y").diff("x").to_string(), "y");
        assert_eq!(p("sin(x)").diff("x").to_string(), "cos(x)");
        assert_eq!(p("3").diff("x").to_string(), "0");
        assert_eq!(p("x^3").diff("x").to_string(), "3*x^2");
        assert_eq!(p("y^2").diff("x").to_string(), "0");
    }

    #[test]
    fn eval_examples() {
        assert_eq!(p("x*y").eval(&[("x", 2.0), ("y", 3.0)]).unwrap(), 6.0);
        assert_eq!(p("sqrt(x)").eval(&[("x", 4.0)]).unwrap(), 2.0);
        assert_eq!(p("1/x").eval(&[("x", 0.0)]), Err(ExprError::DivisionByZero));
        assert!(matches!(p("sqrt(x)").eval(&[("x", -1.0)]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn printing_keeps_structure() {
        for s in ["-x^2", "(-x)^2", "x - (y - 1)", "x*-2", "-(x*y)", "(x^2)^3", "sin(-x)/(1 + y)"] {
            let e = p(s);
            assert_eq!(p(&e.to_string()), e, "{s}");
        }
    }

    #[test]
    fn compiled_matches_tree() {
        let exprs = [p("x*y + sin(x*y)"), p("sqrt(x^2 + y^2)"), p("exp(-x)/(1 + y^2)")];
        let prog = Program::compile(&exprs, &["x", "y"]).unwrap();
        let out = prog.eval_vec(&[0.7, -1.3]).unwrap();
        for (e, v) in exprs.iter().zip(out) {
            assert_eq!(e.eval(&[("x", 0.7), ("y", -1.3)]).unwrap(), v);
        }
        assert!(matches!(
            Program::compile(&[p("z")], &["x"]),
            Err(ExprError::UnknownVariable(_))
        ));
    }

    use crate::testutil::smooth_expr;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn central_difference_matches_diff(e in smooth_expr(), a in -1.0f64..1.0, y in -1.0f64..1.0) {
            let h = 1e-6 * (1.0 + a.abs());
            let f = |x: f64| e.eval(&[("x", x), ("y", y)]).unwrap();
            let fd = (f(a + h) - f(a - h)) / (2.0 * h);
            let exact = e.diff("x").eval(&[("x", a), ("y", y)]).unwrap();
            // Cancellation error of the difference quotient is ~1e-16 * |f| / h.
            let noise = 1e-9 * (1.0 + f(a).abs());
            prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0) + noise,
                "{}: fd {} vs exact {}", e, fd, exact);
        }

        #[test]
        fn print_parse_is_a_fixed_point(e in smooth_expr()) {
            let once = e.to_string();
            let reparsed = parse(&once).unwrap();
            prop_assert_eq!(reparsed.to_string(), once.clone());
            let env = [("x", 0.3), ("y", -0.7)];
            prop_assert_eq!(reparsed.eval(&env).unwrap(), e.eval(&env).unwrap());
        }
    }

    #[test]
    fn substitution() {
        let mut map = HashMap::new();
        map.insert("x".to_string(), p("y + 1"));
        let e = p("x^2").substitute(&map);
        assert_eq!(e.eval(&[("y", 2.0)]).unwrap(), 9.0);
    }
}
