//! Calibration metrics.
//!
//! All metrics bin predictions into `J` equal-width bins over their point
//! confidence. Interval-valued predictions are binned by their point value
//! (the fitted bin mean) and additionally produce the induced ECE range.

use crate::binom::ConfidenceInterval;
use crate::calibrate::{check_unit, BinningScheme, CoverageTable, PredictionRecord};
use crate::error::{invalid, Error, Result};

/// Default number of evaluation bins.
pub const DEFAULT_ECE_BINS: usize = 20;

/// A prediction scored against its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluatedPrediction {
    conf_point: f64,
    conf_interval: Option<ConfidenceInterval>,
    correct: bool,
}

impl EvaluatedPrediction {
    pub fn new(conf_point: f64, conf_interval: Option<ConfidenceInterval>, correct: bool) -> Result<Self> {
        check_unit(conf_point, "confidence")?;
        if let Some(ci) = conf_interval {
            if !ci.contains(conf_point) {
                return Err(invalid(format!("point confidence {conf_point} lies outside {ci}")));
            }
        }
        Ok(Self {
            conf_point,
            conf_interval,
            correct,
        })
    }

    /// Raw top-label confidence of `record`.
    pub fn from_record(record: &PredictionRecord) -> Self {
        Self {
            conf_point: record.top_conf,
            conf_interval: None,
            correct: record.is_correct(),
        }
    }

    /// `record` remapped through `table`: bin mean plus bin interval.
    pub fn from_table(table: &CoverageTable, record: &PredictionRecord) -> Result<Self> {
        let k = table.scheme().bin_index(record.top_conf)?;
        let bin = table.bins()[k];
        Self::new(bin.mean, Some(bin.interval), record.is_correct())
    }

    pub fn conf_point(&self) -> f64 {
        self.conf_point
    }

    pub fn conf_interval(&self) -> Option<ConfidenceInterval> {
        self.conf_interval
    }

    pub fn correct(&self) -> bool {
        self.correct
    }
}

/// One evaluation bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityBin {
    pub lower_edge: f64,
    pub upper_edge: f64,
    pub count: usize,
    /// Mean point confidence; `None` for an empty bin.
    pub mean_conf: Option<f64>,
    /// `[min lo, max hi]` over the bin's intervals, when every prediction has one.
    pub conf_range: Option<ConfidenceInterval>,
    /// Fraction correct; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

#[derive(Default)]
struct Accumulator {
    count: usize,
    correct: usize,
    conf_sum: f64,
    lo: f64,
    hi: f64,
    all_intervals: bool,
}

fn accumulate(preds: &[EvaluatedPrediction], j: usize) -> Result<(BinningScheme, Vec<Accumulator>)> {
    let scheme = BinningScheme::equal_width(j)?;
    let mut acc: Vec<Accumulator> = (0..j)
        .map(|_| Accumulator {
            lo: f64::INFINITY,
            hi: f64::NEG_INFINITY,
            all_intervals: true,
            ..Accumulator::default()
        })
        .collect();
    for p in preds {
        let a = &mut acc[scheme.bin_index(p.conf_point)?];
        a.count += 1;
        a.correct += usize::from(p.correct);
        a.conf_sum += p.conf_point;
        match p.conf_interval {
            Some(ci) => {
                a.lo = a.lo.min(ci.lo());
                a.hi = a.hi.max(ci.hi());
            }
            None => a.all_intervals = false,
        }
    }
    Ok((scheme, acc))
}

/// Reliability-diagram rows, ordered by bin.
pub fn reliability_data(preds: &[EvaluatedPrediction], j: usize) -> Result<Vec<ReliabilityBin>> {
    let (scheme, acc) = accumulate(preds, j)?;
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let (lower_edge, upper_edge) = scheme.bounds(k);
            let filled = a.count > 0;
            ReliabilityBin {
                lower_edge,
                upper_edge,
                count: a.count,
                mean_conf: filled.then(|| a.conf_sum / a.count as f64),
                conf_range: (filled && a.all_intervals)
                    .then(|| ConfidenceInterval::new(a.lo, a.hi))
                    .transpose()
                    .expect("bounds of valid intervals"),
                accuracy: filled.then(|| a.correct as f64 / a.count as f64),
            }
        })
        .collect())
}

/// Expected calibration error `sum_j |S_j|/|S| * |conf_j - acc_j|`.
pub fn ece(preds: &[EvaluatedPrediction], j: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total = preds.len() as f64;
    Ok(reliability_data(preds, j)?
        .iter()
        .filter_map(|b| Some(b.count as f64 / total * (b.mean_conf? - b.accuracy?).abs()))
        .sum())
}

/// Range of ECE values attainable when each bin's confidence may be anywhere
/// in `[min lo, max hi]` over its predictions.
pub fn induced_ece(preds: &[EvaluatedPrediction], j: usize) -> Result<ConfidenceInterval> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(index) = preds.iter().position(|p| p.conf_interval.is_none()) {
        return Err(Error::MissingInterval { index });
    }
    let total = preds.len() as f64;
    let (mut lo, mut hi) = (0.0, 0.0);
    for b in reliability_data(preds, j)? {
        let (Some(range), Some(acc)) = (b.conf_range, b.accuracy) else {
            continue;
        };
        let w = b.count as f64 / total;
        let nearest = if range.contains(acc) {
            0.0
        } else {
            (acc - range.lo()).abs().min((acc - range.hi()).abs())
        };
        let farthest = (acc - range.lo()).abs().max((acc - range.hi()).abs());
        lo += w * nearest;
        hi += w * farthest;
    }
    ConfidenceInterval::new(lo.min(1.0), hi.min(1.0))
}

/// Conditional accuracy at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub count: usize,
    /// `P[correct | conf_point >= t]`.
    pub accuracy: f64,
    /// `P[correct | lo >= t]` and its support, for interval inputs.
    pub lower: Option<(f64, usize)>,
    /// `P[correct | hi >= t]` and its support, for interval inputs.
    pub upper: Option<(f64, usize)>,
}

fn conditional(preds: &[EvaluatedPrediction], keep: impl Fn(&EvaluatedPrediction) -> bool) -> Option<(f64, usize)> {
    let (mut n, mut s) = (0usize, 0usize);
    for p in preds.iter().filter(|p| keep(p)) {
        n += 1;
        s += usize::from(p.correct);
    }
    (n > 0).then(|| (s as f64 / n as f64, n))
}

/// Accuracy among predictions with confidence at least each threshold.
/// Thresholds with no qualifying prediction are omitted.
pub fn accuracy_confidence_curve(preds: &[EvaluatedPrediction], thresholds: &[f64]) -> Result<Vec<CurvePoint>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(invalid("thresholds must be sorted ascending"));
    }
    let intervals = !preds.is_empty() && preds.iter().all(|p| p.conf_interval.is_some());
    let bound = |p: &EvaluatedPrediction, upper: bool| {
        let ci = p.conf_interval.expect("checked above");
        if upper {
            ci.hi()
        } else {
            ci.lo()
        }
    };
    Ok(thresholds
        .iter()
        .filter_map(|&t| {
            let (accuracy, count) = conditional(preds, |p| p.conf_point >= t)?;
            Some(CurvePoint {
                threshold: t,
                count,
                accuracy,
                lower: if intervals { conditional(preds, |p| bound(p, false) >= t) } else { None },
                upper: if intervals { conditional(preds, |p| bound(p, true) >= t) } else { None },
            })
        })
        .collect())
}
