//! Monte-Carlo harnesses checking the guarantees against ground truth.
//!
//! Each harness repeats a full calibrate-and-select run on fresh draws from a
//! generator whose truth is known exactly, counts the runs where the
//! guarantee fails, and compares that fraction with `rate + 3 sigma`, where
//! `sigma = sqrt(rate (1 - rate) / trials)`. Trial `i` draws from
//! [`trial_rng`]`(seed, i)` and can be replayed alone.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::binom::{check_alpha, clopper_pearson, clopper_pearson_tail_oracle, BernoulliCounts, ConfidenceInterval};
use crate::calibrate::fit_coverage_predictor;
use crate::cascade::{
    constraint_value, evaluate_cascade, select_thresholds, BranchCosts, CascadeRecord, Candidates, Threshold,
    ThresholdVector,
};
use crate::error::{invalid, Result};
use crate::rng::{domain, keyed_rng, trial_rng};
use crate::safeplan::{
    baseline_thresholds, collect_calibration_data, select_safety_threshold, Baseline, Gridworld, SafetyThreshold,
    UnsafetyOracle,
};
use crate::synth::{SyntheticCalibGenerator, TwoBranchGenerator};

/// `rate + 3 sqrt(rate (1 - rate) / trials)`.
pub fn three_sigma_limit(rate: f64, trials: usize) -> f64 {
    rate + 3.0 * (rate * (1.0 - rate) / trials as f64).sqrt()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Largest disagreement between the beta-quantile and tail-sum forms over all
/// `s <= n <= max_n` and the given levels.
pub fn cp_oracle_discrepancy(max_n: u64, alphas: &[f64]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &alpha in alphas {
        for n in 0..=max_n {
            for s in 0..=n {
                let counts = BernoulliCounts::new(s, n)?;
                let a = clopper_pearson(counts, alpha)?;
                let b = clopper_pearson_tail_oracle(counts, alpha)?;
                worst = worst.max((a.lo() - b.lo()).abs()).max((a.hi() - b.hi()).abs());
            }
        }
    }
    Ok(worst)
}

/// Empirical coverage of the interval for one `(theta, n, alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpCoverageCell {
    pub theta: f64,
    pub n: u64,
    pub alpha: f64,
    pub draws: usize,
    pub coverage: f64,
    /// `1 - alpha - 3 sigma`.
    pub required: f64,
}

impl CpCoverageCell {
    pub fn passed(&self) -> bool {
        self.coverage >= self.required
    }
}

impl fmt::Display for CpCoverageCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "theta={} n={} alpha={} coverage={:.4} required={:.4} {}",
            self.theta,
            self.n,
            self.alpha,
            self.coverage,
            self.required,
            verdict(self.passed())
        )
    }
}

/// Coverage of the interval over `draws` binomial draws for every cell of the
/// grid. Cell `i` (theta-major, then `n`, then `alpha`) uses stream `i`.
pub fn cp_coverage_grid(
    thetas: &[f64],
    ns: &[u64],
    alphas: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<CpCoverageCell>> {
    check_trials(draws)?;
    let mut cells = Vec::with_capacity(thetas.len() * ns.len() * alphas.len());
    for &theta in thetas {
        for &n in ns {
            let binomial = Binomial::new(n, theta).map_err(|e| invalid(e.to_string()))?;
            for &alpha in alphas {
                let intervals = (0..=n)
                    .map(|s| clopper_pearson(BernoulliCounts::new(s, n)?, alpha))
                    .collect::<Result<Vec<ConfidenceInterval>>>()?;
                let mut rng = trial_rng(seed, cells.len() as u64);
                let covered = (0..draws)
                    .filter(|_| intervals[binomial.sample(&mut rng) as usize].contains(theta))
                    .count();
                let miss = alpha.min(1.0);
                cells.push(CpCoverageCell {
                    theta,
                    n,
                    alpha,
                    draws,
                    coverage: covered as f64 / draws as f64,
                    required: 1.0 - three_sigma_limit(miss, draws),
                });
            }
        }
    }
    Ok(cells)
}

/// Parameters of [`validate_coverage`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageConfig {
    pub trials: usize,
    /// Calibration records per trial.
    pub n: usize,
    pub delta: f64,
    /// Every interval is shrunk by this factor around the bin mean; 1 leaves
    /// them untouched. Values above 1 give a negative control.
    pub shrink: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            n: 2000,
            delta: 0.1,
            shrink: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    pub bins: usize,
    /// Trials where at least one bin's interval missed its true accuracy.
    pub failures: usize,
    pub limit: f64,
    pub mean_width: f64,
}

impl CoverageReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.config.trials as f64
    }

    pub fn passed(&self) -> bool {
        self.failure_rate() <= self.limit
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "coverage: trials={} n={} K={} delta={} shrink={}",
            c.trials, c.n, self.bins, c.delta, c.shrink
        )?;
        writeln!(f, "mean interval width: {:.6}", self.mean_width)?;
        writeln!(
            f,
            "all-bins failure rate: {:.6} ({}/{}), limit delta + 3 sigma = {:.6}",
            self.failure_rate(),
            self.failures,
            c.trials,
            self.limit
        )?;
        write!(f, "{}", verdict(self.passed()))
    }
}

fn shrink_interval(mean: f64, ci: ConfidenceInterval, factor: f64) -> Result<ConfidenceInterval> {
    ConfidenceInterval::new(mean - (mean - ci.lo()) / factor, mean + (ci.hi() - mean) / factor)
}

/// Fits the coverage table on `trials` fresh draws and counts the draws where
/// some bin's interval misses the generator's accuracy for that bin.
pub fn validate_coverage(
    generator: &SyntheticCalibGenerator,
    config: CoverageConfig,
    seed: u64,
) -> Result<CoverageReport> {
    check_trials(config.trials)?;
    check_alpha(config.delta)?;
    if config.shrink.is_nan() || config.shrink < 1.0 {
        return Err(invalid(format!("shrink factor must be at least 1, got {}", config.shrink)));
    }
    let bins = generator.scheme().num_bins();
    let (mut failures, mut width) = (0usize, 0.0);
    for i in 0..config.trials {
        let records = generator.sample(config.n, &mut trial_rng(seed, i as u64));
        let mut table = fit_coverage_predictor(&records, generator.scheme(), config.delta)?;
        if config.shrink > 1.0 {
            table = table.map_intervals(|mean, ci| shrink_interval(mean, ci, config.shrink))?;
        }
        let covered = table
            .bins()
            .iter()
            .zip(generator.theta())
            .all(|(b, &theta)| b.interval.contains(theta));
        failures += usize::from(!covered);
        width += table.bins().iter().map(|b| b.interval.width()).sum::<f64>() / bins as f64;
    }
    Ok(CoverageReport {
        config,
        bins,
        failures,
        limit: three_sigma_limit(config.delta, config.trials),
        mean_width: width / config.trials as f64,
    })
}

/// Parameters of [`validate_cascade`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeValidationConfig {
    pub trials: usize,
    pub n: usize,
    pub xi: f64,
    pub delta: f64,
}

impl Default for CascadeValidationConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            n: 5000,
            xi: 0.05,
            delta: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeReport {
    pub config: CascadeValidationConfig,
    /// Trials whose selected threshold has true excess error above `xi`.
    pub violations: usize,
    pub limit: f64,
    pub mean_excess_error: f64,
    pub mean_fast_exit_rate: f64,
    /// Trials where the fast exit was disabled.
    pub disabled: usize,
}

impl CascadeReport {
    pub fn violation_rate(&self) -> f64 {
        self.violations as f64 / self.config.trials as f64
    }

    pub fn passed(&self) -> bool {
        self.violation_rate() <= self.limit
    }
}

impl fmt::Display for CascadeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "cascade: trials={} n={} xi={} delta={}", c.trials, c.n, c.xi, c.delta)?;
        writeln!(
            f,
            "mean true excess error: {:.6}, mean fast exit rate: {:.6}, disabled: {}",
            self.mean_excess_error, self.mean_fast_exit_rate, self.disabled
        )?;
        writeln!(
            f,
            "violation rate: {:.6} ({}/{}), limit delta + 3 sigma = {:.6}",
            self.violation_rate(),
            self.violations,
            c.trials,
            self.limit
        )?;
        write!(f, "{}", verdict(self.passed()))
    }
}

/// Selects the fast-exit threshold on `trials` fresh calibration sets and
/// counts selections whose exact excess error exceeds `xi`.
pub fn validate_cascade(
    generator: &TwoBranchGenerator,
    config: CascadeValidationConfig,
    seed: u64,
) -> Result<CascadeReport> {
    check_trials(config.trials)?;
    let (mut violations, mut disabled, mut excess, mut exits) = (0usize, 0usize, 0.0, 0.0);
    for i in 0..config.trials {
        let records = generator.sample(config.n, &mut trial_rng(seed, i as u64));
        let selection = select_thresholds(&records, config.xi, config.delta, Candidates::Observed)?;
        let gamma = selection.thresholds.as_slice()[0];
        let e = generator.excess_error(gamma);
        violations += usize::from(e > config.xi);
        disabled += usize::from(gamma == Threshold::Disabled);
        excess += e;
        exits += generator.fast_exit_rate(gamma);
    }
    let t = config.trials as f64;
    Ok(CascadeReport {
        config,
        violations,
        limit: three_sigma_limit(config.delta, config.trials),
        mean_excess_error: excess / t,
        mean_fast_exit_rate: exits / t,
        disabled,
    })
}

/// First-branch threshold selected at each `xi`, on the same records.
pub fn threshold_path(records: &[CascadeRecord], xis: &[f64], delta: f64) -> Result<Vec<Threshold>> {
    xis.iter()
        .map(|&xi| Ok(select_thresholds(records, xi, delta, Candidates::Observed)?.thresholds.as_slice()[0]))
        .collect()
}

/// True when the thresholds never increase, `Disabled` ranking above every value.
pub fn is_nonincreasing(path: &[Threshold]) -> bool {
    let rank = |t: Threshold| match t {
        Threshold::At(g) => g,
        Threshold::Disabled => f64::INFINITY,
    };
    path.windows(2).all(|w| rank(w[1]) <= rank(w[0]))
}

/// Result of scanning every candidate threshold of a two-branch cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityCheck {
    pub selected: Threshold,
    pub selected_cost: f64,
    pub selected_feasible: bool,
    /// Lowest calibration-set mean cost over feasible candidates.
    pub best_cost: f64,
    pub feasible_candidates: usize,
    pub candidates: usize,
}

impl OptimalityCheck {
    pub fn passed(&self) -> bool {
        self.selected_feasible && self.selected_cost <= self.best_cost
    }
}

impl fmt::Display for OptimalityCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "selected {} cost {:.6}, best feasible cost {:.6}, {}/{} candidates feasible {}",
            self.selected,
            self.selected_cost,
            self.best_cost,
            self.feasible_candidates,
            self.candidates,
            verdict(self.passed())
        )
    }
}

/// Compares the selected two-branch threshold with every candidate, each
/// checked through the direct bound computation.
pub fn check_optimality(records: &[CascadeRecord], xi: f64, delta: f64, costs: &BranchCosts) -> Result<OptimalityCheck> {
    if records.first().map(CascadeRecord::num_branches) != Some(2) {
        return Err(invalid("the optimality scan needs a non-empty two-branch calibration set"));
    }
    let selected = select_thresholds(records, xi, delta, Candidates::Observed)?.thresholds.as_slice()[0];
    let mut values: Vec<f64> = records.iter().map(|r| r.branch(0).conf).chain([0.0, 1.0]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let candidates: Vec<Threshold> = values
        .into_iter()
        .map(Threshold::At)
        .chain([Threshold::Disabled])
        .collect();
    let cost = |t: Threshold| -> Result<f64> {
        Ok(evaluate_cascade(records, &ThresholdVector::new(vec![t]), costs)?.mean_cost)
    };
    let feasible = |t: Threshold| -> Result<bool> {
        Ok(constraint_value(records, &ThresholdVector::new(vec![t]), delta)? <= xi)
    };
    let mut best_cost = f64::INFINITY;
    let mut feasible_candidates = 0;
    for &t in &candidates {
        if feasible(t)? {
            feasible_candidates += 1;
            best_cost = best_cost.min(cost(t)?);
        }
    }
    Ok(OptimalityCheck {
        selected,
        selected_cost: cost(selected)?,
        selected_feasible: feasible(selected)?,
        best_cost,
        feasible_candidates,
        candidates: candidates.len(),
    })
}

/// Parameters of [`validate_safeplan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeplanValidationConfig {
    pub trials: usize,
    /// Rollouts in the collision-flag pool.
    pub n: usize,
    /// Rollouts in the score pool.
    pub n_pool: usize,
    pub xi: f64,
    pub delta: f64,
    pub oracle_rollouts: usize,
}

impl Default for SafeplanValidationConfig {
    fn default() -> Self {
        Self {
            trials: 300,
            n: 5000,
            n_pool: 5000,
            xi: 0.1,
            delta: 0.1,
            oracle_rollouts: 1_000_000,
        }
    }
}

/// True unsafety of the uncertified `gamma = 0.5` shield.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineCheck {
    pub threshold: SafetyThreshold,
    pub p_unsafe: f64,
    pub standard_error: f64,
    pub xi: f64,
}

impl BaselineCheck {
    /// The baseline exceeds `xi` by more than three standard errors.
    pub fn violates(&self) -> bool {
        self.p_unsafe - 3.0 * self.standard_error > self.xi
    }
}

impl fmt::Display for BaselineCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "baseline gamma={}: true p_unsafe {:.6} (se {:.6}) {} xi={}",
            self.threshold,
            self.p_unsafe,
            self.standard_error,
            if self.violates() { "violates" } else { "meets" },
            self.xi
        )
    }
}

pub fn naive_baseline_check(oracle: &UnsafetyOracle, xi: f64) -> BaselineCheck {
    let threshold = baseline_thresholds(Baseline::Naive, xi);
    BaselineCheck {
        threshold,
        p_unsafe: oracle.p_unsafe(threshold),
        standard_error: oracle.standard_error(threshold),
        xi,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeplanReport {
    pub config: SafeplanValidationConfig,
    pub nominal_unsafe_rate: f64,
    /// Trials whose selected threshold has oracle unsafety above `xi`.
    pub violations: usize,
    pub limit: f64,
    pub mean_p_unsafe: f64,
    /// Median selected threshold, `AlwaysBackup` ranking below every value.
    pub median_threshold: SafetyThreshold,
    pub always_backup: usize,
    pub baseline: BaselineCheck,
}

impl SafeplanReport {
    pub fn violation_rate(&self) -> f64 {
        self.violations as f64 / self.config.trials as f64
    }

    pub fn passed(&self) -> bool {
        self.violation_rate() <= self.limit
    }
}

impl fmt::Display for SafeplanReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(
            f,
            "safeplan: trials={} n={} pool={} xi={} delta={} oracle rollouts={}",
            c.trials, c.n, c.n_pool, c.xi, c.delta, c.oracle_rollouts
        )?;
        writeln!(f, "nominal unsafe rate: {:.6}", self.nominal_unsafe_rate)?;
        writeln!(
            f,
            "median threshold: {}, always backup: {}, mean true p_unsafe: {:.6}",
            self.median_threshold, self.always_backup, self.mean_p_unsafe
        )?;
        writeln!(f, "{}", self.baseline)?;
        writeln!(
            f,
            "violation rate: {:.6} ({}/{}), limit delta + 3 sigma = {:.6}",
            self.violation_rate(),
            self.violations,
            c.trials,
            self.limit
        )?;
        write!(f, "{}", verdict(self.passed()))
    }
}

/// Selects a shield threshold from fresh rollout pools in each trial and
/// checks its unsafety against a large nominal-rollout oracle.
pub fn validate_safeplan(world: &Gridworld, config: SafeplanValidationConfig, seed: u64) -> Result<SafeplanReport> {
    check_trials(config.trials)?;
    let oracle_seed: u64 = keyed_rng(seed, domain::ORACLE, 0).random();
    let oracle = UnsafetyOracle::estimate(world, config.oracle_rollouts, oracle_seed)?;
    let mut thresholds = Vec::with_capacity(config.trials);
    let (mut violations, mut total) = (0usize, 0.0);
    for i in 0..config.trials {
        let trial_seed: u64 = trial_rng(seed, i as u64).random();
        let data = collect_calibration_data(world, config.n, config.n_pool, trial_seed);
        let selection = select_safety_threshold(&data.unsafe_flags, &data.scores, config.xi, config.delta)?;
        let p = oracle.p_unsafe(selection.threshold);
        violations += usize::from(p > config.xi);
        total += p;
        thresholds.push(selection.threshold);
    }
    let rank = |t: &SafetyThreshold| match *t {
        SafetyThreshold::At(g) => g,
        SafetyThreshold::AlwaysBackup => f64::NEG_INFINITY,
    };
    thresholds.sort_by(|a, b| rank(a).total_cmp(&rank(b)));
    Ok(SafeplanReport {
        config,
        nominal_unsafe_rate: oracle.nominal_unsafe_rate(),
        violations,
        limit: three_sigma_limit(config.delta, config.trials),
        mean_p_unsafe: total / config.trials as f64,
        median_threshold: thresholds[thresholds.len() / 2],
        always_backup: thresholds.iter().filter(|t| **t == SafetyThreshold::AlwaysBackup).count(),
        baseline: naive_baseline_check(&oracle, config.xi),
    })
}
