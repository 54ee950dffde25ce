//! Test support for the mmoe suites.
//!
//! Everything under [`oracle`] is written against the raw parameter layouts,
//! without calling the library code it is meant to check.

#![allow(clippy::needless_range_loop)]

pub mod checks;
pub mod oracle;
pub mod random;
