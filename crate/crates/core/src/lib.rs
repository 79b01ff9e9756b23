//! Finite-difference laboratory for uniformly elliptic Dirichlet problems with
//! quadratic growth in the gradient,
//!
//! ```text
//! -(a_ij ∂_ij u + b_i ∂_i u) = λ c(x) u + <M(x)∇u, ∇u> + h(x)   in Ω,
//! u = g on ∂Ω,
//! ```
//!
//! on structured interval/rectangle grids. The crate provides the discrete
//! operators and their Jacobians, exponential changes of the dependent
//! variable that remove the gradient term, damped and deflated Newton solvers,
//! pseudo-arclength continuation with fold detection and diagram
//! classification, and numerical verification of boundary/interior maximum
//! principle and Harnack-type inequalities on computed solutions.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the default `std`
//! feature only switches the float math backend.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod continuation;
pub mod error;
pub mod grid;
pub mod harnack;
pub mod linalg;
pub mod math;
pub mod maxprinciple;
pub mod operators;
pub mod rng;
pub mod solver;
pub mod transform;

pub use error::{CoreError, Result};
pub use grid::{Grid, GridFunction, NodeClass, Region};
pub use operators::{
    CoefficientBounds, MField, MatrixField, OperatorCoefficients, ProblemKind, ProblemSpec,
    SparseSystem, SubstitutionScheme,
};
pub use solver::{DeflationSet, NewtonOptions, SolveStatus, Solution};
pub use transform::{TransformDirection, TransformSpec};
