//! Generalized `L^p` medians on Carnot-group pseudoballs.
//!
//! The crate evaluates the mean-value constant `c(p, v₁, …, v_k)` of the
//! normalized p-Laplacian in closed form, checks it against independent
//! Monte-Carlo quadrature, measures the expansion
//! `μ_p(ε, u)(x) = u(x) + c·Δ^N_p u(x)·ε² + o(ε²)` numerically, and solves
//! p-harmonic Dirichlet problems by iterating the mean-value operator.

// `!(x > a)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod ballquad;
pub mod error;
pub mod group;
pub mod median;
pub mod solver;
pub mod special;

pub use error::{Error, Result};
pub use group::{GroupModel, GroupPoint, ModelKind, Stratification};
