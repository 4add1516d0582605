//! Synthetic data with analytically known ground truth.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::calibrate::{check_unit, BinningScheme, PredictionRecord};
use crate::cascade::{BranchOutput, CascadeRecord, Threshold};
use crate::error::{invalid, Result};

/// Prediction stream whose accuracy in bin `k` is exactly `theta[k]`.
#[derive(Debug, Clone)]
pub struct SyntheticCalibGenerator {
    scheme: BinningScheme,
    theta: Vec<f64>,
    weights: Vec<f64>,
    picker: WeightedIndex<f64>,
}

impl SyntheticCalibGenerator {
    pub fn new(scheme: BinningScheme, theta: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let k = scheme.num_bins();
        if theta.len() != k || weights.len() != k {
            return Err(invalid(format!(
                "{k} bins but {} accuracies and {} weights",
                theta.len(),
                weights.len()
            )));
        }
        for &t in &theta {
            check_unit(t, "bin accuracy")?;
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("bin weights must be nonnegative and sum to 1"));
        }
        let picker = WeightedIndex::new(&weights).map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            scheme,
            theta,
            weights,
            picker,
        })
    }

    /// `K` equal bins, equal mass, accuracy equal to the bin midpoint.
    pub fn calibrated(k: usize) -> Result<Self> {
        let scheme = BinningScheme::equal_width(k)?;
        let theta = (0..k).map(|i| (i as f64 + 0.5) / k as f64).collect();
        Self::new(scheme, theta, vec![1.0 / k as f64; k])
    }

    /// `K` equal bins with overconfident accuracies `0.3 + 0.6 * midpoint`
    /// and mass growing towards high confidence.
    pub fn overconfident(k: usize) -> Result<Self> {
        let scheme = BinningScheme::equal_width(k)?;
        let theta = (0..k).map(|i| 0.3 + 0.6 * (i as f64 + 0.5) / k as f64).collect();
        let total = (k * (k + 1) / 2) as f64;
        let weights = (1..=k).map(|i| i as f64 / total).collect();
        Self::new(scheme, theta, weights)
    }

    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    /// True accuracy of each bin.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draws `n` records: bin by weight, confidence uniform in the bin,
    /// correct with probability `theta[k]`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<PredictionRecord> {
        (0..n)
            .map(|_| {
                let k = self.picker.sample(rng);
                let (lo, hi) = self.scheme.bounds(k);
                // 1 - u lies in (0, 1], keeping the open lower edge
                let u: f64 = rng.random();
                let conf = match k {
                    0 => hi * u,
                    _ => Some(lo + (hi - lo) * (1.0 - u)).filter(|&c| c > lo).unwrap_or(hi),
                };
                let correct = rng.random_bool(self.theta[k]);
                PredictionRecord {
                    top_conf: conf.clamp(0.0, 1.0),
                    pred_label: 1,
                    true_label: i64::from(correct),
                }
            })
            .collect()
    }
}

/// Two-branch cascade with known error rates.
///
/// The fast branch's confidence `u` is uniform on `[0, 1]` and it is correct
/// with probability `fast_lo + (fast_hi - fast_lo) * u`; the slow branch is
/// correct with probability `slow_accuracy`, independently. Wrong labels are
/// uniform over the other classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBranchGenerator {
    pub fast_lo: f64,
    pub fast_hi: f64,
    pub slow_accuracy: f64,
    pub num_classes: i64,
}

impl Default for TwoBranchGenerator {
    fn default() -> Self {
        Self {
            fast_lo: 0.0,
            fast_hi: 1.0,
            slow_accuracy: 0.8,
            num_classes: 10,
        }
    }
}

impl TwoBranchGenerator {
    pub fn new(fast_lo: f64, fast_hi: f64, slow_accuracy: f64, num_classes: i64) -> Result<Self> {
        check_unit(fast_lo, "fast accuracy at confidence 0")?;
        check_unit(fast_hi, "fast accuracy at confidence 1")?;
        check_unit(slow_accuracy, "slow accuracy")?;
        if num_classes < 2 {
            return Err(invalid("at least two classes are required"));
        }
        Ok(Self {
            fast_lo,
            fast_hi,
            slow_accuracy,
            num_classes,
        })
    }

    /// Random instance with an increasing fast-branch accuracy curve.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let fast_lo = rng.random_range(0.0..0.5);
        let fast_hi = rng.random_range(fast_lo + 0.3..=1.0);
        Self {
            fast_lo,
            fast_hi,
            slow_accuracy: rng.random_range(0.6..0.95),
            num_classes: rng.random_range(2..20),
        }
    }

    fn label<R: Rng + ?Sized>(&self, truth: i64, correct: bool, rng: &mut R) -> i64 {
        if correct {
            truth
        } else {
            (truth + rng.random_range(1..self.num_classes)) % self.num_classes
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<CascadeRecord> {
        (0..n)
            .map(|_| {
                let truth = rng.random_range(0..self.num_classes);
                let u: f64 = rng.random();
                let fast_ok = rng.random_bool(self.fast_lo + (self.fast_hi - self.fast_lo) * u);
                let slow_ok = rng.random_bool(self.slow_accuracy);
                let fast = BranchOutput {
                    conf: u,
                    pred: self.label(truth, fast_ok, rng),
                };
                let slow = BranchOutput {
                    conf: rng.random(),
                    pred: self.label(truth, slow_ok, rng),
                };
                CascadeRecord::new(vec![fast, slow], truth).expect("two branches, confidences in [0, 1]")
            })
            .collect()
    }

    /// Exact excess error of the cascade over the slow branch:
    /// `(h - lo)(1 - g) - (hi - lo)(1 - g^2)/2` with `h` the slow accuracy.
    pub fn excess_error(&self, gamma: Threshold) -> f64 {
        match gamma {
            Threshold::Disabled => 0.0,
            Threshold::At(g) => {
                let g = g.clamp(0.0, 1.0);
                (self.slow_accuracy - self.fast_lo) * (1.0 - g)
                    - (self.fast_hi - self.fast_lo) * (1.0 - g * g) / 2.0
            }
        }
    }

    /// Fraction of examples exiting at the fast branch.
    pub fn fast_exit_rate(&self, gamma: Threshold) -> f64 {
        match gamma {
            Threshold::Disabled => 0.0,
            Threshold::At(g) => 1.0 - g.clamp(0.0, 1.0),
        }
    }
}
