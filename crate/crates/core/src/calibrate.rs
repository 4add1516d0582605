//! Histogram-binning confidence coverage.
//!
//! Confidences are sorted into bins `B_1 = [0, b_1]`, `B_k = (b_{k-1}, b_k]`
//! and each bin gets a Clopper-Pearson interval for its accuracy at level
//! `delta / K`. A union bound over the `K` bins makes all intervals hold
//! simultaneously with probability at least `1 - delta`.
//!
//! Bin indices are zero-based throughout the API.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::binom::{check_alpha, clopper_pearson, BernoulliCounts, ConfidenceInterval};
use crate::error::{invalid, parse_err, Error, Result};

/// One labelled classifier output: top-label confidence, predicted label and
/// true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    pub top_conf: f64,
    pub pred_label: i64,
    pub true_label: i64,
}

impl PredictionRecord {
    pub fn new(top_conf: f64, pred_label: i64, true_label: i64) -> Result<Self> {
        check_unit(top_conf, "confidence")?;
        Ok(Self {
            top_conf,
            pred_label,
            true_label,
        })
    }

    pub fn is_correct(&self) -> bool {
        self.pred_label == self.true_label
    }
}

pub(crate) fn check_unit(v: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("{what} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Upper bin edges `b_1 < ... < b_K = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningScheme {
    edges: Vec<f64>,
}

impl BinningScheme {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        let Some(&last) = edges.last() else {
            return Err(invalid("a binning scheme needs at least one edge"));
        };
        if last != 1.0 {
            return Err(invalid(format!("the last bin edge must be 1, got {last}")));
        }
        if edges[0] < 0.0 || edges.windows(2).any(|w| w[0].is_nan() || w[0] >= w[1]) {
            return Err(invalid("bin edges must be strictly increasing within [0, 1]"));
        }
        Ok(Self { edges })
    }

    /// `K` bins of width `1/K`.
    pub fn equal_width(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("the number of bins must be positive"));
        }
        let mut edges: Vec<f64> = (1..=k).map(|i| i as f64 / k as f64).collect();
        edges[k - 1] = 1.0;
        Self::new(edges)
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Zero-based bin of `conf`; values on an edge go to the lower bin.
    pub fn bin_index(&self, conf: f64) -> Result<usize> {
        check_unit(conf, "confidence")?;
        Ok(self.edges.partition_point(|&e| e < conf))
    }

    /// `(lower, upper)` edges of bin `k`; the lower edge of bin 0 is 0.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lower = if k == 0 { 0.0 } else { self.edges[k - 1] };
        (lower, self.edges[k])
    }
}

/// Fitted statistics of one bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSummary {
    pub trials: u64,
    pub successes: u64,
    pub interval: ConfidenceInterval,
    /// `s / n`, or 0.5 for an empty bin.
    pub mean: f64,
}

/// Per-bin counts and intervals: the fitted coverage predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageTable {
    scheme: BinningScheme,
    delta: f64,
    bins: Vec<BinSummary>,
}

fn bin_counts(records: &[PredictionRecord], scheme: &BinningScheme) -> Result<Vec<BernoulliCounts>> {
    let mut tallies = vec![(0u64, 0u64); scheme.num_bins()];
    for r in records {
        let k = scheme.bin_index(r.top_conf)?;
        tallies[k].0 += u64::from(r.is_correct());
        tallies[k].1 += 1;
    }
    tallies
        .into_iter()
        .map(|(s, n)| BernoulliCounts::new(s, n))
        .collect()
}

fn mean_or_half(counts: BernoulliCounts) -> f64 {
    counts.proportion().unwrap_or(0.5)
}

/// Fits the coverage predictor: bin `k` gets `clopper_pearson(s_k, n_k, delta/K)`.
pub fn fit_coverage_predictor(
    records: &[PredictionRecord],
    scheme: &BinningScheme,
    delta: f64,
) -> Result<CoverageTable> {
    check_alpha(delta)?;
    let alpha = delta / scheme.num_bins() as f64;
    let bins = bin_counts(records, scheme)?
        .into_iter()
        .map(|c| {
            Ok(BinSummary {
                trials: c.trials(),
                successes: c.successes(),
                interval: clopper_pearson(c, alpha)?,
                mean: mean_or_half(c),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CoverageTable {
        scheme: scheme.clone(),
        delta,
        bins,
    })
}

/// Single-bin interval over raw success indicators at level `delta`.
pub fn fit_c0<I: IntoIterator<Item = bool>>(successes: I, delta: f64) -> Result<ConfidenceInterval> {
    clopper_pearson(BernoulliCounts::from_indicators(successes), delta)
}

impl CoverageTable {
    pub fn scheme(&self) -> &BinningScheme {
        &self.scheme
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn bins(&self) -> &[BinSummary] {
        &self.bins
    }

    pub fn total_trials(&self) -> u64 {
        self.bins.iter().map(|b| b.trials).sum()
    }

    pub fn predict_interval(&self, conf: f64) -> Result<ConfidenceInterval> {
        Ok(self.bins[self.scheme.bin_index(conf)?].interval)
    }

    /// Bin mean for `conf`, the point value paired with [`Self::predict_interval`].
    pub fn predict_mean(&self, conf: f64) -> Result<f64> {
        Ok(self.bins[self.scheme.bin_index(conf)?].mean)
    }

    /// Same table with every interval replaced by `f(mean, interval)`.
    pub fn map_intervals<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(f64, ConfidenceInterval) -> Result<ConfidenceInterval>,
    {
        let bins = self
            .bins
            .iter()
            .map(|b| Ok(BinSummary { interval: f(b.mean, b.interval)?, ..*b }))
            .collect::<Result<_>>()?;
        Ok(Self { bins, ..self.clone() })
    }

    /// Text form: a header line, then `n s lo hi mean` per bin.
    pub fn to_text(&self) -> String {
        let edges: Vec<String> = self.scheme.edges.iter().map(|e| format!("{e:.16e}")).collect();
        let mut out = format!(
            "coverage-table K={} delta={:.16e} edges={}\n",
            self.scheme.num_bins(),
            self.delta,
            edges.join(",")
        );
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{} {} {:.16e} {:.16e} {:.16e}",
                b.trials,
                b.successes,
                b.interval.lo(),
                b.interval.hi(),
                b.mean
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let (hline, header) = lines.next().ok_or(Error::EmptyInput)?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("coverage-table") {
            return Err(parse_err(hline, "expected a `coverage-table` header"));
        }
        let (mut k, mut delta, mut edges) = (None, None, None);
        for field in fields {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| parse_err(hline, format!("malformed header field `{field}`")))?;
            match key {
                "K" => k = Some(parse_num::<usize>(hline, value)?),
                "delta" => delta = Some(parse_num::<f64>(hline, value)?),
                "edges" => {
                    edges = Some(
                        value
                            .split(',')
                            .map(|e| parse_num::<f64>(hline, e))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => return Err(parse_err(hline, format!("unknown header field `{key}`"))),
            }
        }
        let missing = |name: &str| parse_err(hline, format!("header lacks `{name}`"));
        let k = k.ok_or_else(|| missing("K"))?;
        let delta = delta.ok_or_else(|| missing("delta"))?;
        let scheme = BinningScheme::new(edges.ok_or_else(|| missing("edges"))?)
            .map_err(|e| parse_err(hline, e.to_string()))?;
        if scheme.num_bins() != k {
            return Err(parse_err(hline, format!("K={k} but {} edges", scheme.num_bins())));
        }
        check_alpha(delta).map_err(|e| parse_err(hline, e.to_string()))?;

        let mut bins = Vec::with_capacity(k);
        for (line, row) in lines {
            let f: Vec<&str> = row.split_whitespace().collect();
            if f.len() != 5 {
                return Err(parse_err(line, format!("expected 5 fields, found {}", f.len())));
            }
            let trials = parse_num::<u64>(line, f[0])?;
            let successes = parse_num::<u64>(line, f[1])?;
            if successes > trials {
                return Err(parse_err(line, "successes exceed trials"));
            }
            let interval =
                ConfidenceInterval::new(parse_num(line, f[2])?, parse_num(line, f[3])?)
                    .map_err(|e| parse_err(line, e.to_string()))?;
            let mean = parse_num::<f64>(line, f[4])?;
            bins.push(BinSummary {
                trials,
                successes,
                interval,
                mean,
            });
        }
        if bins.len() != k {
            return Err(parse_err(hline, format!("K={k} but {} bin rows", bins.len())));
        }
        Ok(Self {
            scheme,
            delta,
            bins,
        })
    }
}

pub(crate) fn parse_num<T: FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(line, format!("cannot parse `{s}` as a number")))
}

/// Plain histogram binning: per-bin empirical accuracy, no interval.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBinning {
    scheme: BinningScheme,
    estimates: Vec<f64>,
}

/// Per-bin mean accuracy `s_k / n_k`, 0.5 for empty bins.
pub fn fit_histogram_binning(
    records: &[PredictionRecord],
    scheme: &BinningScheme,
) -> Result<HistogramBinning> {
    let estimates = bin_counts(records, scheme)?.into_iter().map(mean_or_half).collect();
    Ok(HistogramBinning {
        scheme: scheme.clone(),
        estimates,
    })
}

impl HistogramBinning {
    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn predict(&self, conf: f64) -> Result<f64> {
        Ok(self.estimates[self.scheme.bin_index(conf)?])
    }
}
