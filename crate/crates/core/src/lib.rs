//! Late fusion of bird's-eye-view detections from multiple sources.
//!
//! The crate covers the whole evaluation loop: controlled noise injection on
//! ground-truth boxes ([`noise`]), cross-source association ([`assoc`]), an
//! uncertainty-aware Kalman fuser with timing-aware ingestion ([`unikf`]),
//! reference late-fusion baselines ([`baselines`]), FP-aware metrics ([`eval`]),
//! persistence ([`io`]) and the experiment driver ([`pipeline`]).

pub mod assoc;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod noise;
pub mod pipeline;
pub mod unikf;

pub use error::{Error, Result};

/// Timestamps and durations, in integer microseconds.
pub type Micros = i64;

pub(crate) fn micros_to_secs(us: Micros) -> f64 {
    us as f64 * 1e-6
}
