//! Exact binomial proportion intervals.
//!
//! [`clopper_pearson`] uses beta quantiles; [`clopper_pearson_tail_oracle`]
//! inverts binomial tail sums directly and is kept as an independent check.

mod beta;
mod tail;

use std::fmt;

pub use beta::{beta_quantile, regularized_incomplete_beta, QUANTILE_MAX_ITER, QUANTILE_TOL};
pub use tail::clopper_pearson_tail_oracle;

use crate::error::{invalid, Result};

/// Closed interval `[lo, hi]` inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    lo: f64,
    hi: f64,
}

impl ConfidenceInterval {
    /// `[0, 1]`, returned whenever there is no data.
    pub const VACUOUS: Self = Self { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(invalid(format!(
                "interval [{lo}, {hi}] is not a sub-interval of [0, 1]"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate interval `[p, p]`.
    pub fn point(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    /// True when `other` lies inside `self`.
    pub fn covers(&self, other: &Self) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

impl fmt::Display for ConfidenceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// `s` successes out of `n` Bernoulli trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BernoulliCounts {
    successes: u64,
    trials: u64,
}

impl BernoulliCounts {
    pub fn new(successes: u64, trials: u64) -> Result<Self> {
        if successes > trials {
            return Err(invalid(format!(
                "successes ({successes}) exceed trials ({trials})"
            )));
        }
        Ok(Self { successes, trials })
    }

    pub fn from_indicators<I: IntoIterator<Item = bool>>(indicators: I) -> Self {
        let (mut successes, mut trials) = (0, 0);
        for b in indicators {
            trials += 1;
            successes += u64::from(b);
        }
        Self { successes, trials }
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// `s / n`, or `None` without trials.
    pub fn proportion(&self) -> Option<f64> {
        (self.trials > 0).then(|| self.successes as f64 / self.trials as f64)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Clopper-Pearson interval at miscoverage `alpha`.
///
/// `lo` is the `alpha/2` quantile of `Beta(s, n-s+1)` (0 when `s = 0`) and
/// `hi` the `1 - alpha/2` quantile of `Beta(s+1, n-s)` (1 when `s = n`). No
/// trials gives `[0, 1]`. The upper end is computed as `1 - q` with `q` the
/// `alpha/2` quantile of `Beta(n-s, s+1)`, which avoids solving near `p = 1`
/// and makes the interval exactly symmetric under `s -> n - s`.
pub fn clopper_pearson(counts: BernoulliCounts, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let (s, n) = (counts.successes as f64, counts.trials as f64);
    if counts.trials == 0 {
        return Ok(ConfidenceInterval::VACUOUS);
    }
    let half = alpha / 2.0;
    let lo = if counts.successes == 0 {
        0.0
    } else {
        beta_quantile(half, s, n - s + 1.0)?
    };
    let hi = if counts.successes == counts.trials {
        1.0
    } else {
        1.0 - beta_quantile(half, n - s, s + 1.0)?
    };
    ConfidenceInterval::new(lo, hi)
}
