//! Core algorithms for distributed simultaneous input and state interval
//! observers (DSISO).
//!
//! The crate is organized bottom-up:
//!
//! * [`interval`] — interval vectors and sign-split matrix arithmetic,
//! * [`expr`] — a small expression language for declaring vector fields,
//! * [`jss`] — Jacobian sign-stable decompositions and tight mixed-monotone
//!   decomposition functions,
//! * [`decouple`] — per-agent SVD-based unknown-input decoupling and the
//!   equivalent propagation dynamics,
//! * [`observer`] — the four-step DSISO recursion,
//! * [`netsim`] — communication graph and synchronous round execution,
//! * [`optim`] — a self-contained LP / branch-and-bound MILP backend,
//! * [`synthesis`] — error-system assembly, centralized MILP gain design,
//!   distributed detectability verification, and error bounds.
//!
//! The crate is `no_std` compatible (it allocates, so `alloc` is required);
//! all numerics are dense `f64` via `nalgebra`.

#![cfg_attr(not(any(test, feature = "solver-trace")), no_std)]

extern crate alloc;

pub mod decouple;
pub mod error;
pub mod expr;
pub mod interval;
pub mod jss;
pub mod netsim;
pub mod observer;
pub mod optim;
pub mod synthesis;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
