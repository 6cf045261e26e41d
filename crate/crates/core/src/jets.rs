//! Truncated power series in the time variable `t`.
//!
//! A [`Jet`] of degree `D` stores `c_0..=c_D`, the coefficients of `t^0..t^D`.
//! Arithmetic discards every term above `t^D`, so the coefficients of any
//! composition are exact up to that degree. The `j`-th derivative at `t = 0`
//! is `j! * c_j`.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::expr::{Expr, ExprError, Func};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("jet degree mismatch: {0} vs {1}")]
    DegreeMismatch(usize, usize),
    #[error("jet domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn zero(degree: usize) -> Jet {
        Jet { coeffs: vec![0.0; degree + 1] }
    }

    pub fn constant(c: f64, degree: usize) -> Jet {
        let mut j = Jet::zero(degree);
        j.coeffs[0] = c;
        j
    }

    /// `c + t`, the jet of the time variable shifted to `c`.
    pub fn variable(c: f64, degree: usize) -> Jet {
        let mut j = Jet::constant(c, degree);
        if degree >= 1 {
            j.coeffs[1] = 1.0;
        }
        j
    }

    /// Builds a jet of the given degree; missing coefficients are zero and
    /// extra ones are truncated.
    pub fn from_coeffs(coeffs: &[f64], degree: usize) -> Jet {
        let mut j = Jet::zero(degree);
        for (dst, src) in j.coeffs.iter_mut().zip(coeffs) {
            *dst = *src;
        }
        j
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.coeffs.get(j).copied().unwrap_or(0.0)
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    /// `d^j/dt^j` at `t = 0`.
    pub fn derivative_at_zero(&self, j: usize) -> f64 {
        let fact: f64 = (1..=j).map(|i| i as f64).product();
        fact * self.coeff(j)
    }

    /// Evaluates the truncated polynomial at `t`.
    pub fn eval_at(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    fn check(&self, other: &Jet) -> Result<(), JetError> {
        if self.degree() != other.degree() {
            return Err(JetError::DegreeMismatch(self.degree(), other.degree()));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.add_unchecked(other))
    }

    pub fn checked_sub(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.sub_unchecked(other))
    }

    pub fn checked_mul(&self, other: &Jet) -> Result<Jet, JetError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn add_unchecked(&self, other: &Jet) -> Jet {
        Jet { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    fn sub_unchecked(&self, other: &Jet) -> Jet {
        Jet { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }

    fn mul_unchecked(&self, other: &Jet) -> Jet {
        let d = self.degree();
        let mut out = vec![0.0; d + 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out[i..].iter_mut().zip(&other.coeffs) {
                *o += a * b;
            }
        }
        Jet { coeffs: out }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet { coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn div(&self, den: &Jet) -> Result<Jet, JetError> {
        self.check(den)?;
        let b0 = den.coeffs[0];
        if b0 == 0.0 {
            return Err(JetError::Domain("zero constant term under quotient".into()));
        }
        let mut q = vec![0.0; self.coeffs.len()];
        for k in 0..q.len() {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc -= den.coeffs[j] * q[k - j];
            }
            q[k] = acc / b0;
        }
        Ok(Jet { coeffs: q })
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a0 = self.coeffs[0];
        if a0 == 0.0 {
            return Err(JetError::Domain("zero constant term under sqrt".into()));
        }
        if a0 < 0.0 {
            return Err(JetError::Domain(format!("sqrt of negative constant term {a0}")));
        }
        let mut s = vec![0.0; self.coeffs.len()];
        s[0] = a0.sqrt();
        for k in 1..s.len() {
            let mut acc = self.coeffs[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Ok(Jet { coeffs: s })
    }

    pub fn exp(&self) -> Jet {
        let mut e = vec![0.0; self.coeffs.len()];
        e[0] = self.coeffs[0].exp();
        for k in 1..e.len() {
            let acc: f64 = (1..=k).map(|j| j as f64 * self.coeffs[j] * e[k - j]).sum();
            e[k] = acc / k as f64;
        }
        Jet { coeffs: e }
    }

    /// `(sin a, cos a)` via the coupled recurrences `s' = c a'`, `c' = -s a'`.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let n = self.coeffs.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = self.coeffs[0].sin();
        c[0] = self.coeffs[0].cos();
        for k in 1..n {
            let mut sk = 0.0;
            let mut ck = 0.0;
            for j in 1..=k {
                let ja = j as f64 * self.coeffs[j];
                sk += ja * c[k - j];
                ck -= ja * s[k - j];
            }
            s[k] = sk / k as f64;
            c[k] = ck / k as f64;
        }
        (Jet { coeffs: s }, Jet { coeffs: c })
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut result = Jet::constant(1.0, self.degree());
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = result.mul_unchecked(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.mul_unchecked(&base);
            }
        }
        result
    }
}

// Operator forms panic on degree mismatch; use the `checked_*` methods when
// degrees are not known to agree.
impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        self.checked_add(rhs).expect("jet degree mismatch")
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        self.checked_sub(rhs).expect("jet degree mismatch")
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.checked_mul(rhs).expect("jet degree mismatch")
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

pub fn jet_arith(a: &Jet, b: &Jet, op: JetOp) -> Result<Jet, JetError> {
    match op {
        JetOp::Add => a.checked_add(b),
        JetOp::Sub => a.checked_sub(b),
        JetOp::Mul => a.checked_mul(b),
    }
}

/// Jet of `e` composed with the jets bound in `env`, exact to `degree`.
pub fn jet_eval_expr(e: &Expr, env: &HashMap<String, Jet>, degree: usize) -> Result<Jet, JetError> {
    eval_with(e, &|name| env.get(name), degree)
}

/// Same as [`jet_eval_expr`] with variables looked up by closure.
pub fn eval_with<'a, F>(e: &Expr, lookup: &F, degree: usize) -> Result<Jet, JetError>
where
    F: Fn(&str) -> Option<&'a Jet>,
{
    Ok(match e {
        Expr::Const(c) => Jet::constant(*c, degree),
        Expr::Var(v) => {
            let j = lookup(v).ok_or_else(|| ExprError::UnknownVariable(v.clone()))?;
            if j.degree() != degree {
                return Err(JetError::DegreeMismatch(j.degree(), degree));
            }
            j.clone()
        }
        Expr::Add(a, b) => eval_with(a, lookup, degree)?.add_unchecked(&eval_with(b, lookup, degree)?),
        Expr::Sub(a, b) => eval_with(a, lookup, degree)?.sub_unchecked(&eval_with(b, lookup, degree)?),
        Expr::Mul(a, b) => eval_with(a, lookup, degree)?.mul_unchecked(&eval_with(b, lookup, degree)?),
        Expr::Div(a, b) => eval_with(a, lookup, degree)?.div(&eval_with(b, lookup, degree)?)?,
        Expr::Pow(a, n) => eval_with(a, lookup, degree)?.powi(*n),
        Expr::Neg(a) => eval_with(a, lookup, degree)?.scale(-1.0),
        Expr::Call(f, a) => {
            let inner = eval_with(a, lookup, degree)?;
            match f {
                Func::Sin => inner.sin_cos().0,
                Func::Cos => inner.sin_cos().1,
                Func::Exp => inner.exp(),
                Func::Sqrt => inner.sqrt()?,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::testutil::poly_expr;
    use proptest::prelude::*;

    fn tenv(degree: usize) -> HashMap<String, Jet> {
        HashMap::from([("x".to_string(), Jet::variable(0.0, degree))])
    }

    #[test]
    fn arithmetic_examples() {
        let a = Jet::from_coeffs(&[1.0, 1.0], 2);
        assert_eq!(jet_arith(&a, &a, JetOp::Mul).unwrap().coeffs(), &[1.0, 2.0, 1.0]);
        let t = Jet::variable(0.0, 1);
        assert_eq!((&t * &t).coeffs(), &[0.0, 0.0]);
        assert_eq!(jet_arith(&a, &a, JetOp::Sub).unwrap().coeffs(), &[0.0, 0.0, 0.0]);
        assert_eq!(
            jet_arith(&a, &t, JetOp::Add),
            Err(JetError::DegreeMismatch(2, 1))
        );
    }

    #[test]
    fn expression_examples() {
        let j = jet_eval_expr(&parse("x^2").unwrap(), &tenv(3), 3).unwrap();
        assert_eq!(j.coeffs(), &[0.0, 0.0, 1.0, 0.0]);
        let j = jet_eval_expr(&parse("sin(x)").unwrap(), &tenv(3), 3).unwrap();
        assert_eq!(j.coeffs()[..3], [0.0, 1.0, 0.0]);
        assert!((j.coeff(3) + 1.0 / 6.0).abs() < 1e-16);
        assert!(matches!(
            jet_eval_expr(&parse("1/x").unwrap(), &tenv(3), 3),
            Err(JetError::Domain(_))
        ));
        assert!(matches!(
            jet_eval_expr(&parse("sqrt(x)").unwrap(), &tenv(3), 3),
            Err(JetError::Domain(_))
        ));
    }

    #[test]
    fn transcendental_series() {
        let d = 8;
        let env = HashMap::from([("x".to_string(), Jet::variable(0.3, d))]);
        // Compare against the Taylor coefficients obtained by repeated symbolic differentiation.
        for src in ["exp(x)", "cos(2*x)", "sqrt(1 + x)", "1/(2 + x^2)", "sin(x)*exp(-x)"] {
            let e = parse(src).unwrap();
            let j = jet_eval_expr(&e, &env, d).unwrap();
            let mut deriv = e.clone();
            let mut fact = 1.0;
            for k in 0..=d {
                if k > 0 {
                    deriv = deriv.diff("x");
                    fact *= k as f64;
                }
                let expected = deriv.eval(&[("x", 0.3)]).unwrap() / fact;
                assert!(
                    (j.coeff(k) - expected).abs() <= 1e-12 * (1.0 + expected.abs()),
                    "{src} coefficient {k}: {} vs {expected}",
                    j.coeff(k)
                );
            }
        }
    }

    #[test]
    fn derivative_at_zero_scales_by_factorial() {
        let j = Jet::from_coeffs(&[1.0, 2.0, 3.0, 4.0], 3);
        assert_eq!(j.derivative_at_zero(3), 24.0);
        assert_eq!(j.eval_at(2.0), 1.0 + 4.0 + 12.0 + 32.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn polynomial_coefficients_match_symbolic(e in poly_expr(), a in -1.5f64..1.5) {
            let d = 6;
            let env = HashMap::from([
                ("x".to_string(), Jet::variable(a, d)),
                ("y".to_string(), Jet::constant(0.5, d)),
            ]);
            let j = jet_eval_expr(&e, &env, d).unwrap();
            let mut deriv = e.clone();
            let mut fact = 1.0;
            let scale = (0..=d).fold(1e-300f64, |m, k| m.max(j.coeff(k).abs()));
            for k in 0..=d {
                if k > 0 {
                    deriv = deriv.diff("x");
                    fact *= k as f64;
                }
                let expected = deriv.eval(&[("x", a), ("y", 0.5)]).unwrap() / fact;
                prop_assert!((j.coeff(k) - expected).abs() <= 1e-12 * scale.max(1.0),
                    "coefficient {}: {} vs {}", k, j.coeff(k), expected);
            }
        }

        #[test]
        fn truncated_mul_is_commutative_and_associative(
            a in proptest::collection::vec(-2.0f64..2.0, 5),
            b in proptest::collection::vec(-2.0f64..2.0, 5),
            c in proptest::collection::vec(-2.0f64..2.0, 5),
        ) {
            let (a, b, c) = (Jet::from_coeffs(&a, 4), Jet::from_coeffs(&b, 4), Jet::from_coeffs(&c, 4));
            let ab = &a * &b;
            let ba = &b * &a;
            let l = &ab * &c;
            let r = &a * &(&b * &c);
            for k in 0..=4 {
                let s = 1.0 + l.max_abs();
                prop_assert!((ab.coeff(k) - ba.coeff(k)).abs() <= 1e-13 * s);
                prop_assert!((l.coeff(k) - r.coeff(k)).abs() <= 1e-13 * s);
            }
        }
    }
}
