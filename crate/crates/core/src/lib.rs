//! Reservoir computing on networks of Kuramoto phase oscillators.
//!
//! The crate covers the whole pipeline: network construction
//! ([`topology`]), phase dynamics with clamped input oscillators
//! ([`dynamics`]), synchronization diagnostics ([`order`]), benchmark signals
//! and targets ([`signals`]), linear readout training ([`readout`]) and
//! experiment orchestration ([`experiments`]).

pub mod dynamics;
pub mod error;
pub mod order;
pub mod pipeline;
pub mod readout;
pub mod signals;
pub mod topology;
pub mod experiments;

pub use error::{Error, Result};
