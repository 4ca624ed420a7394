//! Experiment harness: config parsing, seeded suites, metrics and the
//! acceptance criteria.

pub mod bench;
pub mod config;
pub mod error;
pub mod metrics;
pub mod seeding;
pub mod studies;
pub mod suite;
pub mod verify;

pub use error::{HarnessError, Result};
