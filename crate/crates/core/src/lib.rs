//! PAC confidence coverage for classifier confidences.
//!
//! Histogram binning combined with exact Clopper-Pearson intervals gives an
//! interval per confidence bin that contains the bin's true accuracy for all
//! bins simultaneously with probability at least `1 - delta` over the
//! calibration draw. Two downstream procedures build on those intervals:
//!
//! - [`cascade`]: thresholds for early-exit cascaded classifiers, chosen so the
//!   cascade's error exceeds the slow branch's error by at most `xi`.
//! - [`safeplan`]: the threshold of a recoverability classifier driving a
//!   safety shield, chosen so the shielded policy is unsafe with probability at
//!   most `xi`. A deterministic gridworld supplies rollouts.
//!
//! [`metrics`] evaluates calibration (ECE, induced ECE intervals, reliability
//! data), [`synth`] provides generators with analytically known ground truth,
//! and [`validate`] wraps them in Monte-Carlo harnesses. The `pacconf` binary
//! exposes everything through [`cli`].
//!
//! ```
//! use pacconf::binom::{clopper_pearson, BernoulliCounts};
//!
//! let ci = clopper_pearson(BernoulliCounts::new(0, 10).unwrap(), 0.05).unwrap();
//! assert_eq!(ci.lo(), 0.0);
//! assert!((ci.hi() - (1.0 - 0.025f64.powf(0.1))).abs() < 1e-12);
//! ```

pub mod binom;
pub mod calibrate;
pub mod cascade;
pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod safeplan;
pub mod synth;
pub mod validate;

pub use error::{Error, Result};
