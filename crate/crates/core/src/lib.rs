//! Discrete-event simulation of communication timing: channels, queues,
//! one- and two-way protocols, processing pipelines, freshness metrics,
//! voter consensus and federated-learning round timing.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod consensus;
pub mod engine;
pub mod error;
pub mod fedsim;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod protocols;
pub mod rng;
pub mod scenario;
pub mod sources;
pub mod time;

pub use error::{Error, Result};
pub use time::{Instant, Span};
