//! Simulation and signal-processing library for an integrated sensing and
//! communications base station: sector scanning with LP power allocation,
//! clutter suppression, CFAR detection and subspace range/velocity
//! estimation.

pub mod arrayfield;
pub mod channel;
pub mod clutterfilter;
pub mod commlink;
pub mod config;
pub mod detect;
pub mod echoes;
pub mod error;
pub mod harness;
pub mod powalloc;
pub mod rdest;
pub mod scenario;

pub use error::{IsacError, Result};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 3e8;
