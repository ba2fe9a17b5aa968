//! Differentiable operations, implemented as methods on [`Var`](crate::Var).

pub mod conv;
pub mod elementwise;
pub mod linalg;
pub mod reduce;
pub mod shape;
