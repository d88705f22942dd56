//! Desk-scale benchmark harness: a catalog of toy problems, the three
//! experiment runners, invariant checks and CSV/JSON writers.

pub mod catalog;
pub mod error;
pub mod experiments;
pub mod invariants;
pub mod output;
pub mod reactor;
pub mod selftest;

pub use error::{BenchError, BenchResult};
