//! Trace-driven simulator of an L1 data cache with selective-flush
//! mitigations against contention-based cache timing attacks.
//!
//! The cache model tracks MESI coherence metadata, a per-line FaSe state
//! bit (set when the line's coherence bits are updated in the current
//! time slice), and a cache-wide CLSF flag (set when an access happens
//! inside a user-marked critical segment). Three flush mechanisms run at
//! context-switch flush points:
//!
//! - naive: invalidate and clean every valid line;
//! - LLSF: flush only valid lines whose FaSe bit is 0;
//! - CLSF: nullify the whole flush event when no critical access happened
//!   since the last flush, otherwise behave like LLSF.
//!
//! On top of the simulator sits a Prime+Probe attack harness that mounts
//! the three-stage attack against a secret-dependent victim and scores
//! how much of the victim's set-access pattern the probe latencies leak.

pub mod attack;
pub mod cache;
pub mod config;
pub mod error;
pub mod flush;
pub mod report;
pub mod sim;

pub use error::Error;
