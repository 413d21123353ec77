//! Distributed mini-batch online prediction on a deterministic simulated network.
//!
//! The crate is split along the same seams as the protocols it hosts:
//!
//! - [`learn`]: loss models, projected update rules, regret bookkeeping and
//!   closed-form regret/latency bounds.
//! - [`simnet`]: a single-threaded discrete-event simulator with seeded
//!   arrival streams, link latencies and fault injection.
//! - [`serial`], [`dmb_sync`], [`mawo`], [`admb`]: the protocols, each written
//!   as a [`simnet::Protocol`] state machine.
//! - [`scenario`]: wiring that turns a [`scenario::Scenario`] into a finished
//!   [`record::RunOutput`].
//!
//! Everything here is pure computation over `alloc` collections. File
//! formats, configuration parsing and the CLI live in the `dmbsim` crate.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod admb;
pub mod digest;
pub mod dmb_sync;
pub mod error;
pub mod learn;
pub mod mawo;
pub mod record;
pub mod scenario;
pub mod serial;
pub mod simnet;

pub use error::{Error, Result};
pub use simnet::NodeId;
