//! Upper confidence limits for randomized one-sided tests when `n` of `n + 1`
//! exchangeable binary variables are observed and the held-out one is the
//! target of inference.
//!
//! Each observed failure passes through a channel that turns it into a
//! success with probability `lambda` before counting; the test accepts when
//! at most `l` counted failures remain. The crate provides exact limits (a
//! region method over `n + 2` extremal distributions), closed-form
//! asymptotics, sample-size planners, detection-probability analysis and two
//! independent checkers: a vertex-enumeration oracle and a protocol
//! simulator.

pub mod asymptotics;
pub mod binomial;
pub mod detection;
mod error;
pub mod exact;
pub mod figures;
pub mod oracle;
pub mod planners;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use exact::{ConfidenceBound, Method, RegionPoint, TestDesign};


/// Ceiling that ignores floating noise a few ulps above an integer, so that
/// e.g. `0.9 * 0.1 * 1000` counts as 90 rather than 91.
pub fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}
