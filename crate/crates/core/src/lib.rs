//! # clinch-core
//!
//! Exact solver and verification harness for the adaptive clinching auction
//! with budget-constrained bidders and a divisible good whose supply may
//! arrive online.
//!
//! The crate is organised by role:
//!
//! - [`instance`]: auction inputs, outcomes, validation and the tolerance
//!   convention shared by every other module.
//! - [`engine`]: the event-driven ascending-price process. Between events the
//!   price trajectory is integrated in closed form; at a bidder's value the
//!   discrete exit step is applied.
//! - [`closed_form`]: explicit two-bidder formulas and their marginal rates in
//!   the supply.
//! - [`stream`]: strong online supply state machine emitting non-negative
//!   allocation/payment deltas.
//! - [`oracle`]: independent forward-Euler integrator, seeded corpora and
//!   property checkers (incentive compatibility, Pareto optimality, supply
//!   monotonicity, trace invariants).
//! - [`vcg`]: VCG reference auctions (multi-unit, polymatroid, capacities).
//! - [`json`]: number formatting and line-oriented schemas used by the CLI.
//!
//! ```
//! use clinch_core::{engine, AuctionInstance};
//!
//! let inst = AuctionInstance::new(vec![1.0, 2.0], vec![3.0, 1.0], 2.0);
//! let outcome = engine::solve(&inst.validate().unwrap()).unwrap();
//! assert!((outcome.payments[0] - 2f64.ln()).abs() < 1e-12);
//! assert!((outcome.allocation[1] - 1.0).abs() < 1e-12);
//! ```

pub mod closed_form;
pub mod engine;
pub mod instance;
pub mod json;
pub mod oracle;
pub mod stream;
pub mod vcg;

pub use instance::{
    approx_eq, utility, validate_instance, AuctionInstance, InstanceError, Outcome, ValidatedInstance,
    DEFAULT_TOLERANCE,
};
