//! Numerical verification toolkit for osculating class-k curve families.
//!
//! The crate measures how closely polynomial curve families `Γ_x` hug an
//! embedded submanifold `M ⊂ ℝⁿ`: contact order by exact jets and by
//! distance decay, the swept volume of `φ(x,t) = x + Σ tʲ vⱼ(x)`, the
//! t-polynomial coefficients of its volume element, and the full
//! ruled-submanifold verdict pipeline.

pub mod cli;
pub mod contact;
pub mod corpus;
pub mod expr;
pub mod exterior;
pub mod jets;
pub mod linalg;
pub mod manifold;
pub mod osculate;
pub mod quadrature;
pub mod scene;
pub mod sweep;

#[cfg(test)]
pub(crate) mod testutil;
