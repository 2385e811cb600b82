//! Adaptive large neighborhood search for mixed-integer programs, with the
//! choice of destroy operator learned online by a multi-armed bandit.
//!
//! The crate bundles everything the search needs: a MIP model with MPS I/O,
//! a bounded-variable simplex, a depth-first branch-and-bound used as the
//! repair solver, the destroy operators, bandit policies, acceptance
//! criteria, the search loop itself, and benchmarking metrics with instance
//! generators.

pub mod model;
pub mod mps;
pub mod simplex;
pub mod bnb;
pub mod repair;
pub mod destroy;
pub mod bandit;
pub mod acceptance;
pub mod generate;
pub mod engine;
pub mod metrics;
