//! Probabilistic solvers for semilinear Cauchy problems
//! `∂ₛu + Lu = −f(s, x, u)`, `u(T, ·) = φ`, driven by Lévy and Lévy-type
//! operators, together with the tooling used to study the stability of the
//! solution map under convergence of the operator symbols.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bsde;
pub mod density;
pub mod error;
pub mod exec;
pub mod fk_solver;
pub mod grid;
pub mod lab;
pub mod nonlinearity;
pub mod rng;
pub mod sampling;
pub mod sde;
pub mod stats;
pub mod symbols;

pub use error::{Error, Result};
