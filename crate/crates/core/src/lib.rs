//! One-sided piecewise-polynomial approximation of nonlinear PDE systems,
//! Baire envelope regularisation, and finite checkers for convergence and
//! uniform convergence structures.

pub mod approx;
pub mod baire;
pub mod domain;
pub mod expr;
pub mod filters;
pub mod order;
