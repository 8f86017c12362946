//! Delta calculus on finite time scales, a Picard solver for partial dynamic
//! integrodifferential equations with Darboux-type conditions, and
//! certificates for the accompanying Gronwall-type bounds.

pub mod cli;
pub mod error;
pub mod expr;
pub mod grid;
pub mod inequalities;
pub mod instances;
pub mod problem;
pub mod selftest;
pub mod solver;
pub mod timescale;

pub use error::{Error, Result};
