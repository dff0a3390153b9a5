//! Numerical toolkit for energy-critical wave maps `R^{2+1} → S²`: evolution,
//! light-cone energy diagnostics, frequency localisation, concentration
//! detection and harmonic-map profiles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod concentration;
pub mod diagnostics;
pub mod evolve;
pub mod field;
pub mod harmonic;
pub mod manifold;
pub mod spectral;
