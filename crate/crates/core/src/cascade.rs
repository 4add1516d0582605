//! Certified early-exit cascades.
//!
//! A cascade of `M` branches returns the prediction of the first branch `m`
//! whose confidence reaches its threshold `gamma_m`, falling back to the last
//! ("slow") branch. Thresholds are chosen one branch at a time, each as small
//! as possible while an upper bound on the cascade's error in excess of the
//! slow branch stays within `xi` with probability at least `1 - delta`.
//!
//! For branch `m` let `W_m` flag the calibration examples that exit at `m`
//! with a prediction different from the slow branch, and `Z_m` be those
//! examples. With `[c_lo, c_hi]` bounding branch `m`'s accuracy on `Z_m`,
//! `[c'_lo, c'_hi]` the slow branch's accuracy on `Z_m` and `[r_lo, r_hi]` the
//! rate of `W_m`, branch `m` adds
//!
//! ```text
//! (1 - c_lo) * r_hi - (1 - c'_hi) * r_lo
//! ```
//!
//! to the bound. Each interval is taken at level `delta / (3 (M - 1))`.
//! Branches are indexed from zero; branch `M - 1` is the slow one.

use std::collections::HashMap;
use std::fmt;

use crate::binom::{check_alpha, clopper_pearson, BernoulliCounts, ConfidenceInterval};
use crate::calibrate::check_unit;
use crate::error::{invalid, Error, Result};

/// Confidence and predicted label of one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOutput {
    pub conf: f64,
    pub pred: i64,
}

/// Outputs of every branch on one example, plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRecord {
    branches: Vec<BranchOutput>,
    label: i64,
}

impl CascadeRecord {
    pub fn new(branches: Vec<BranchOutput>, label: i64) -> Result<Self> {
        if branches.len() < 2 {
            return Err(invalid(format!(
                "a cascade needs at least two branches, got {}",
                branches.len()
            )));
        }
        for b in &branches {
            check_unit(b.conf, "branch confidence")?;
        }
        Ok(Self { branches, label })
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn branches(&self) -> &[BranchOutput] {
        &self.branches
    }

    pub fn branch(&self, m: usize) -> BranchOutput {
        self.branches[m]
    }

    pub fn slow(&self) -> BranchOutput {
        self.branches[self.branches.len() - 1]
    }

    pub fn label(&self) -> i64 {
        self.label
    }
}

/// Exit threshold of one branch. `Disabled` never fires.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    At(f64),
    Disabled,
}

impl Threshold {
    pub fn fires(self, conf: f64) -> bool {
        match self {
            Threshold::At(g) => conf >= g,
            Threshold::Disabled => false,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::At(g) => write!(f, "{g}"),
            Threshold::Disabled => f.write_str("DISABLED"),
        }
    }
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "DISABLED" {
            return Ok(Threshold::Disabled);
        }
        let g: f64 = s
            .parse()
            .map_err(|_| invalid(format!("`{s}` is neither a threshold nor DISABLED")))?;
        check_unit(g, "threshold")?;
        Ok(Threshold::At(g))
    }
}

/// Thresholds of branches `0..M-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector(Vec<Threshold>);

impl ThresholdVector {
    pub fn new(gammas: Vec<Threshold>) -> Self {
        Self(gammas)
    }

    /// Every branch disabled: the cascade is the slow branch.
    pub fn disabled(num_branches: usize) -> Self {
        Self(vec![Threshold::Disabled; num_branches.saturating_sub(1)])
    }

    pub fn as_slice(&self) -> &[Threshold] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for ThresholdVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Branch at which `record` exits under `thresholds`, and its prediction.
pub fn cascade_predict(record: &CascadeRecord, thresholds: &ThresholdVector) -> Result<(usize, i64)> {
    let m = record.num_branches();
    if thresholds.len() != m - 1 {
        return Err(invalid(format!(
            "{} thresholds for a {m}-branch cascade",
            thresholds.len()
        )));
    }
    let exit = thresholds
        .as_slice()
        .iter()
        .zip(&record.branches)
        .position(|(g, b)| g.fires(b.conf))
        .unwrap_or(m - 1);
    Ok((exit, record.branches[exit].pred))
}

/// Intervals entering branch `m`'s contribution to the bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    /// Accuracy of branch `m` on `Z_m`.
    pub branch_correct: ConfidenceInterval,
    /// Accuracy of the slow branch on `Z_m`.
    pub slow_correct: ConfidenceInterval,
    /// Rate of `W_m`.
    pub disagree: ConfidenceInterval,
}

impl BoundTerms {
    /// `(1 - c_lo) * r_hi - (1 - c'_hi) * r_lo`.
    pub fn contribution(&self) -> f64 {
        (1.0 - self.branch_correct.lo()) * self.disagree.hi()
            - (1.0 - self.slow_correct.hi()) * self.disagree.lo()
    }
}

/// Contribution of a branch with threshold `gamma`; exactly 0 when disabled.
pub fn branch_bound(gamma: Threshold, terms: &BoundTerms) -> f64 {
    match gamma {
        Threshold::Disabled => 0.0,
        Threshold::At(_) => terms.contribution(),
    }
}

/// Per-interval miscoverage level `delta / (3 (M - 1))`.
pub fn interval_alpha(delta: f64, num_branches: usize) -> f64 {
    delta / (3 * (num_branches - 1)) as f64
}

fn check_records(records: &[CascadeRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    let m = first.num_branches();
    if let Some(i) = records.iter().position(|r| r.num_branches() != m) {
        return Err(invalid(format!(
            "record {i} has {} branches, expected {m}",
            records[i].num_branches()
        )));
    }
    Ok(m)
}

fn reaches(record: &CascadeRecord, prefix: &[Threshold]) -> bool {
    prefix.iter().zip(&record.branches).all(|(g, b)| !g.fires(b.conf))
}

/// Bound terms of branch `m = thresholds.len() - 1` with the given thresholds
/// of branches `0..=m`, by direct filtering of `records`.
pub fn compute_bound_terms(records: &[CascadeRecord], thresholds: &[Threshold], delta: f64) -> Result<BoundTerms> {
    let num_branches = check_records(records)?;
    check_alpha(delta)?;
    let Some((&gamma, prefix)) = thresholds.split_last() else {
        return Err(invalid("at least one threshold is required"));
    };
    let m = prefix.len();
    if m >= num_branches - 1 {
        return Err(invalid(format!("branch {m} is not a fast branch")));
    }
    let in_z: Vec<&CascadeRecord> = records
        .iter()
        .filter(|r| {
            reaches(r, prefix) && gamma.fires(r.branches[m].conf) && r.branches[m].pred != r.slow().pred
        })
        .collect();
    let alpha = interval_alpha(delta, num_branches);
    let hits = |pick: fn(&CascadeRecord, usize) -> i64| {
        BernoulliCounts::from_indicators(in_z.iter().map(|r| pick(r, m) == r.label))
    };
    Ok(BoundTerms {
        branch_correct: clopper_pearson(hits(|r, m| r.branches[m].pred), alpha)?,
        slow_correct: clopper_pearson(hits(|r, _| r.slow().pred), alpha)?,
        disagree: clopper_pearson(BernoulliCounts::new(in_z.len() as u64, records.len() as u64)?, alpha)?,
    })
}

/// Sum of branch contributions for a full threshold vector.
pub fn constraint_value(records: &[CascadeRecord], thresholds: &ThresholdVector, delta: f64) -> Result<f64> {
    let gammas = thresholds.as_slice();
    let mut total = 0.0;
    for m in 0..gammas.len() {
        let terms = compute_bound_terms(records, &gammas[..=m], delta)?;
        total += branch_bound(gammas[m], &terms);
    }
    Ok(total)
}

/// Threshold values tried for each branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Candidates {
    /// Distinct branch confidences in the calibration set, plus 0 and 1.
    /// The constraint only changes at these values, so the scan is exact.
    Observed,
    /// `i / n` for `i = 0..=n`.
    Grid(usize),
}

fn candidate_values(records: &[CascadeRecord], m: usize, candidates: Candidates) -> Vec<f64> {
    let mut values: Vec<f64> = match candidates {
        Candidates::Observed => records
            .iter()
            .map(|r| r.branches[m].conf)
            .chain([0.0, 1.0])
            .collect(),
        Candidates::Grid(n) => {
            let n = n.max(1);
            (0..=n).map(|i| i as f64 / n as f64).collect()
        }
    };
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
}

/// Per-branch interval cache keyed by success and trial counts.
struct IntervalCache {
    alpha: f64,
    cached: HashMap<(u64, u64), ConfidenceInterval>,
}

impl IntervalCache {
    fn get(&mut self, s: u64, n: u64) -> Result<ConfidenceInterval> {
        if let Some(ci) = self.cached.get(&(s, n)) {
            return Ok(*ci);
        }
        let ci = clopper_pearson(BernoulliCounts::new(s, n)?, self.alpha)?;
        self.cached.insert((s, n), ci);
        Ok(ci)
    }
}

/// Outcome of threshold selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub thresholds: ThresholdVector,
    /// Bound on the excess error at the selected thresholds.
    pub bound: f64,
}

/// Chooses `gamma_0, ..., gamma_{M-2}` in order, each the smallest candidate
/// keeping the running bound within `xi`, or `Disabled` when none does.
pub fn select_thresholds(records: &[CascadeRecord], xi: f64, delta: f64, candidates: Candidates) -> Result<Selection> {
    let num_branches = check_records(records)?;
    check_alpha(delta)?;
    if xi.is_nan() || xi < 0.0 {
        return Err(invalid(format!("xi must be nonnegative, got {xi}")));
    }
    let n = records.len() as u64;
    let mut cache = IntervalCache {
        alpha: interval_alpha(delta, num_branches),
        cached: HashMap::new(),
    };
    let mut chosen: Vec<Threshold> = Vec::with_capacity(num_branches - 1);
    let mut spent = 0.0;
    for m in 0..num_branches - 1 {
        // examples reaching branch m, by confidence descending, with running
        // counts of (disagreeing, branch correct among those, slow correct among those)
        let mut reach: Vec<&CascadeRecord> = records.iter().filter(|r| reaches(r, &chosen)).collect();
        reach.sort_by(|a, b| b.branches[m].conf.total_cmp(&a.branches[m].conf));
        let mut prefix = Vec::with_capacity(reach.len() + 1);
        prefix.push((0u64, 0u64, 0u64));
        for r in &reach {
            let &(k, c, c2) = prefix.last().expect("seeded");
            let b = r.branches[m];
            let disagree = b.pred != r.slow().pred;
            prefix.push(if disagree {
                (k + 1, c + u64::from(b.pred == r.label), c2 + u64::from(r.slow().pred == r.label))
            } else {
                (k, c, c2)
            });
        }
        let mut pick = Threshold::Disabled;
        let mut pick_bound = 0.0;
        let mut last: Option<((u64, u64, u64), f64)> = None;
        for gamma in candidate_values(records, m, candidates) {
            let fired = reach.partition_point(|r| r.branches[m].conf >= gamma);
            let counts = prefix[fired];
            let bound = match last {
                Some((prev, b)) if prev == counts => b,
                _ => {
                    let (k, c, c2) = counts;
                    BoundTerms {
                        branch_correct: cache.get(c, k)?,
                        slow_correct: cache.get(c2, k)?,
                        disagree: cache.get(k, n)?,
                    }
                    .contribution()
                }
            };
            last = Some((counts, bound));
            if spent + bound <= xi {
                pick = Threshold::At(gamma);
                pick_bound = bound;
                break;
            }
        }
        spent += pick_bound;
        chosen.push(pick);
    }
    Ok(Selection {
        thresholds: ThresholdVector::new(chosen),
        bound: spent,
    })
}

/// Abstract cost of running branches `0..=m`, for each exit `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchCosts(Vec<f64>);

impl BranchCosts {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid("branch costs must be positive and finite"));
        }
        if costs.windows(2).any(|w| w[0] > w[1]) {
            return Err(invalid("branch costs must be nondecreasing"));
        }
        Ok(Self(costs))
    }

    /// `1, 2, ..., M`: each branch adds one unit.
    pub fn unit(num_branches: usize) -> Self {
        Self((1..=num_branches).map(|m| m as f64).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Test-set performance of a cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeEvaluation {
    pub error: f64,
    pub slow_error: f64,
    /// `error - slow_error`.
    pub relative_error: f64,
    pub mean_cost: f64,
    pub exit_fractions: Vec<f64>,
}

pub fn evaluate_cascade(records: &[CascadeRecord], thresholds: &ThresholdVector, costs: &BranchCosts) -> Result<CascadeEvaluation> {
    let num_branches = check_records(records)?;
    if costs.0.len() != num_branches {
        return Err(invalid(format!(
            "{} costs for a {num_branches}-branch cascade",
            costs.0.len()
        )));
    }
    let mut exits = vec![0usize; num_branches];
    let (mut wrong, mut slow_wrong, mut cost) = (0usize, 0usize, 0.0);
    for r in records {
        let (exit, pred) = cascade_predict(r, thresholds)?;
        exits[exit] += 1;
        wrong += usize::from(pred != r.label);
        slow_wrong += usize::from(r.slow().pred != r.label);
        cost += costs.0[exit];
    }
    let n = records.len() as f64;
    Ok(CascadeEvaluation {
        error: wrong as f64 / n,
        slow_error: slow_wrong as f64 / n,
        relative_error: (wrong as f64 - slow_wrong as f64) / n,
        mean_cost: cost / n,
        exit_fractions: exits.iter().map(|&e| e as f64 / n).collect(),
    })
}

/// Two-branch baseline `gamma = 1 - (xi + slow_error)`, clamped to `[0, 1]`.
pub fn baseline_threshold_softmax(xi: f64, slow_validation_error: f64) -> ThresholdVector {
    ThresholdVector::new(vec![Threshold::At((1.0 - (xi + slow_validation_error)).clamp(0.0, 1.0))])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(branches: &[(f64, i64)], label: i64) -> CascadeRecord {
        CascadeRecord::new(
            branches.iter().map(|&(conf, pred)| BranchOutput { conf, pred }).collect(),
            label,
        )
        .unwrap()
    }

    fn tv(g: &[Threshold]) -> ThresholdVector {
        ThresholdVector::new(g.to_vec())
    }

    #[test]
    fn predict_exits() {
        let r = rec(&[(0.7, 1), (0.4, 2), (0.9, 3)], 3);
        assert_eq!(cascade_predict(&r, &ThresholdVector::disabled(3)).unwrap(), (2, 3));
        assert_eq!(cascade_predict(&r, &tv(&[Threshold::At(0.0), Threshold::Disabled])).unwrap(), (0, 1));
        assert_eq!(cascade_predict(&r, &tv(&[Threshold::At(0.7), Threshold::At(0.5)])).unwrap(), (0, 1));
        assert_eq!(cascade_predict(&r, &tv(&[Threshold::At(0.71), Threshold::At(0.4)])).unwrap(), (1, 2));
        assert!(cascade_predict(&r, &tv(&[Threshold::At(0.5)])).is_err());
    }

    #[test]
    fn record_validation() {
        assert!(CascadeRecord::new(vec![BranchOutput { conf: 0.5, pred: 0 }], 0).is_err());
        assert!(CascadeRecord::new(vec![BranchOutput { conf: 1.5, pred: 0 }; 2], 0).is_err());
    }

    #[test]
    fn threshold_text() {
        assert_eq!("DISABLED".parse::<Threshold>().unwrap(), Threshold::Disabled);
        assert_eq!("0.25".parse::<Threshold>().unwrap(), Threshold::At(0.25));
        assert!("1.5".parse::<Threshold>().is_err());
        assert_eq!(tv(&[Threshold::At(0.5), Threshold::Disabled]).to_string(), "0.5 DISABLED");
    }

    #[test]
    fn bound_terms_on_hand_built_set() {
        // 20 records; 5 exit at branch 0 disagreeing with the slow branch,
        // branch 0 right on 3 of them, slow right on 1
        let mut records = Vec::new();
        for i in 0..5 {
            let fast_pred = if i < 3 { 7 } else { 1 };
            let slow_pred = if i == 3 { 7 } else { 2 };
            records.push(rec(&[(0.9, fast_pred), (0.5, slow_pred)], 7));
        }
        for _ in 0..10 {
            records.push(rec(&[(0.95, 4), (0.5, 4)], 4));
        }
        for _ in 0..5 {
            records.push(rec(&[(0.2, 1), (0.5, 2)], 2));
        }
        let alpha = interval_alpha(0.3, 2);
        assert!((alpha - 0.1).abs() < 1e-15);
        let t = compute_bound_terms(&records, &[Threshold::At(0.5)], 0.3).unwrap();
        let cp = |s, n| clopper_pearson(BernoulliCounts::new(s, n).unwrap(), alpha).unwrap();
        assert_eq!(t.branch_correct, cp(3, 5));
        assert_eq!(t.slow_correct, cp(1, 5));
        assert_eq!(t.disagree, cp(5, 20));
    }

    #[test]
    fn disabled_branch_contributes_zero() {
        let records: Vec<_> = (0..50).map(|i| rec(&[(0.5, i % 3), (0.5, 0)], 0)).collect();
        let t = compute_bound_terms(&records, &[Threshold::Disabled], 0.1).unwrap();
        assert_eq!(t.disagree.lo(), 0.0);
        let alpha = interval_alpha(0.1, 2);
        assert!((t.disagree.hi() - (1.0 - (alpha / 2.0).powf(1.0 / 50.0))).abs() < 1e-12);
        assert_eq!(t.branch_correct, ConfidenceInterval::VACUOUS);
        assert_eq!(branch_bound(Threshold::Disabled, &t), 0.0);
        assert!(branch_bound(Threshold::At(0.5), &t) > 0.0);
    }

    #[test]
    fn selection_extremes() {
        let records: Vec<_> = (0..200)
            .map(|i| {
                let c = i as f64 / 200.0;
                rec(&[(c, if i % 4 == 0 { 1 } else { 0 }), (0.5, 0)], 0)
            })
            .collect();
        let all = select_thresholds(&records, 1.0, 0.1, Candidates::Observed).unwrap();
        assert_eq!(all.thresholds.as_slice(), &[Threshold::At(0.0)]);
        let none = select_thresholds(&records, 0.0, 0.1, Candidates::Observed).unwrap();
        assert_eq!(none.thresholds.as_slice(), &[Threshold::Disabled]);
        assert_eq!(none.bound, 0.0);
    }

    #[test]
    fn softmax_baseline() {
        let g = |xi, e| baseline_threshold_softmax(xi, e).as_slice()[0];
        match g(0.02, 0.2232) {
            Threshold::At(v) => assert!((v - 0.7568).abs() < 1e-12),
            Threshold::Disabled => unreachable!(),
        }
        assert_eq!(g(0.0, 0.0), Threshold::At(1.0));
        assert_eq!(g(0.6, 0.5), Threshold::At(0.0));
    }

    #[test]
    fn evaluation_extremes() {
        let records = [
            rec(&[(0.9, 1), (0.3, 1)], 1),
            rec(&[(0.2, 0), (0.8, 1)], 1),
            rec(&[(0.6, 2), (0.7, 0)], 0),
        ];
        let costs = BranchCosts::new(vec![1.0, 4.0]).unwrap();
        let slow = evaluate_cascade(&records, &ThresholdVector::disabled(2), &costs).unwrap();
        assert_eq!(slow.relative_error, 0.0);
        assert_eq!(slow.mean_cost, 4.0);
        assert_eq!(slow.exit_fractions, vec![0.0, 1.0]);
        let fast = evaluate_cascade(&records, &tv(&[Threshold::At(0.0)]), &costs).unwrap();
        assert_eq!(fast.mean_cost, 1.0);
        assert!((fast.error - 2.0 / 3.0).abs() < 1e-15);
        assert!((fast.relative_error - 2.0 / 3.0).abs() < 1e-15);
        assert!(BranchCosts::new(vec![2.0, 1.0]).is_err());
        assert!(BranchCosts::new(vec![0.0, 1.0]).is_err());
    }
}
