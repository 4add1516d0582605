//! Clopper-Pearson by direct inversion of binomial tail sums.
//!
//! This path never touches the beta kernel: it sums binomial pmf terms in log
//! space and bisects on `theta`. It is slow (each probe is `O(n)`) and exists
//! to cross-check [`super::clopper_pearson`].

use super::{check_alpha, BernoulliCounts, ConfidenceInterval};
use crate::error::Result;

const BISECTION_STEPS: usize = 200;

struct LogBinomial {
    ln_choose: Vec<f64>,
}

impl LogBinomial {
    fn new(n: u64) -> Self {
        let nf = n as f64;
        let ln_n_fact = libm::lgamma(nf + 1.0);
        let ln_choose = (0..=n)
            .map(|k| {
                let k = k as f64;
                ln_n_fact - libm::lgamma(k + 1.0) - libm::lgamma(nf - k + 1.0)
            })
            .collect();
        Self { ln_choose }
    }

    fn n(&self) -> usize {
        self.ln_choose.len() - 1
    }

    /// `ln P_theta[S = k]` for `0 < theta < 1`.
    fn ln_pmf(&self, k: usize, ln_theta: f64, ln_comp: f64) -> f64 {
        let n = self.n();
        self.ln_choose[k] + k as f64 * ln_theta + (n - k) as f64 * ln_comp
    }

    /// `P_theta[S in range]` via log-sum-exp.
    fn tail(&self, range: std::ops::RangeInclusive<usize>, theta: f64) -> f64 {
        let ln_theta = theta.ln();
        let ln_comp = (-theta).ln_1p();
        let terms: Vec<f64> = range.map(|k| self.ln_pmf(k, ln_theta, ln_comp)).collect();
        let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak == f64::NEG_INFINITY {
            return 0.0;
        }
        let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
        (peak + sum.ln()).exp().min(1.0)
    }
}

/// Clopper-Pearson interval computed as
/// `[inf{theta : P[S >= s] >= alpha/2}, sup{theta : P[S <= s] >= alpha/2}]`.
pub fn clopper_pearson_tail_oracle(
    counts: BernoulliCounts,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let (s, n) = (counts.successes() as usize, counts.trials() as usize);
    if n == 0 {
        return Ok(ConfidenceInterval::VACUOUS);
    }
    let dist = LogBinomial::new(n as u64);
    let target = alpha / 2.0;

    let lo = if s == 0 {
        0.0
    } else {
        // P[S >= s] increases with theta
        let (mut below, mut above) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (below + above);
            if mid <= below || mid >= above {
                break;
            }
            if dist.tail(s..=n, mid) >= target {
                above = mid;
            } else {
                below = mid;
            }
        }
        above
    };

    let hi = if s == n {
        1.0
    } else {
        // P[S <= s] decreases with theta
        let (mut inside, mut outside) = (0.0_f64, 1.0_f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (inside + outside);
            if mid <= inside || mid >= outside {
                break;
            }
            if dist.tail(0..=s, mid) >= target {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    ConfidenceInterval::new(lo, hi)
}
