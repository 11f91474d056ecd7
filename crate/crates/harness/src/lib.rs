//! Experiment suites over the path toolkit: property runs, strongly regular
//! benchmarks, cross-validated training, gradient checks and path-count
//! timing, each producing a [`SuiteReport`].

pub mod error;
pub mod expressiveness;
pub mod inputs;
pub mod report;
pub mod sr;
pub mod timing;
pub mod training;

pub use error::{HarnessError, Result};
pub use report::{CaseRecord, Environment, Format, Summary, SuiteReport};
