//! Proptest strategies shared by unit tests.

use proptest::prelude::*;

use crate::expr::{Expr, Func};

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (-3.0f64..3.0).prop_map(|c| Expr::Const((c * 100.0).round() / 100.0)),
        Just(Expr::var("x")),
        Just(Expr::var("y")),
    ]
}

/// Random polynomials in `x` and `y`.
pub fn poly_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), 0u32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.prop_map(|a| Expr::Neg(Box::new(a))),
        ]
    })
}

/// Random elementary expressions in `x` and `y`. Quotients and square roots
/// are guarded so the result is smooth everywhere.
pub fn smooth_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| {
                // a / (1 + b^2)
                let den = Expr::Add(Box::new(Expr::Const(1.0)), Box::new(Expr::Pow(Box::new(b), 2)));
                Expr::Div(Box::new(a), Box::new(den))
            }),
            (inner.clone(), 0u32..4).prop_map(|(a, n)| Expr::Pow(Box::new(a), n)),
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Sin, Box::new(a))),
            inner.clone().prop_map(|a| Expr::Call(Func::Cos, Box::new(a))),
            inner.clone().prop_map(|a| {
                // exp of a bounded argument
                Expr::Call(Func::Exp, Box::new(Expr::Call(Func::Sin, Box::new(a))))
            }),
            inner.prop_map(|a| {
                let arg = Expr::Add(Box::new(Expr::Const(1.0)), Box::new(Expr::Pow(Box::new(a), 2)));
                Expr::Call(Func::Sqrt, Box::new(arg))
            }),
        ]
    })
}
