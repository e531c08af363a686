//! Design of incrementality (lift) experiments.
//!
//! The crate computes the distribution of the lift statistic for a
//! test/control study where only part of the test group is reached and the
//! control is rescaled to the test group's size, both exactly
//! ([`derived`]) and by Monte Carlo ([`simulate`]). On top of that it derives
//! critical values, statistical power and minimum sample sizes for single-
//! and two-cell studies ([`design`]), and checks the two routes against each
//! other with Kolmogorov–Smirnov campaigns ([`validate`]).

pub mod derived;
pub mod design;
pub mod error;
pub mod model;
pub mod simulate;
pub mod validate;

pub use error::{Error, Result};
