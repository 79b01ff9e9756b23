//! Independent reference computations used to cross-check the main crates.
//!
//! Everything here is deliberately written from scratch against textbook
//! formulations (dense factorization, Runge-Kutta shooting, adaptive
//! Simpson quadrature) and shares no code with the implementations under
//! test.

pub mod dense;
pub mod quadrature;
pub mod shooting;
