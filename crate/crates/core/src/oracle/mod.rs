//! Independent reference solver and property harness.
//!
//! - [`euler`]: forward-Euler integration of the ascending process, written
//!   without the engine's closed forms.
//! - [`corpus`]: seeded random instances, including two-bidder samples
//!   stratified by regime.
//! - [`properties`]: truthfulness, rationality, budget, Pareto and supply
//!   monotonicity checks, run in parallel over a corpus.
//! - [`invariants`]: structural checks along an engine trace.

pub mod corpus;
pub mod euler;
pub mod invariants;
pub mod properties;
pub mod report;

pub use corpus::{n2_stratified, CorpusSpec, N2Sample};
pub use euler::{solve_euler, OracleError};
pub use invariants::check_trace_invariants;
pub use properties::{run_on, run_property, Property};
pub use report::{Check, PropertyReport, Witness};
