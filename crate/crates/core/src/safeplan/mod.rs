//! Certified safety shields on a gridworld.
//!
//! The nominal policy walks greedily towards the goal and takes a uniformly
//! random move with probability `epsilon`. Entering an obstacle is a
//! collision. The shield watches a per-state score (high = predicted
//! unrecoverable) and switches permanently to the backup policy, which stops
//! in place, as soon as the score reaches the threshold `gamma`.
//!
//! Selection bounds the shielded policy's collision probability by
//! `r_hi * (1 - c_lo)`, where `[r_lo, r_hi]` bounds the nominal collision rate
//! (from pool `W`) and `[c_lo, c_hi]` bounds the probability that the shield
//! fires at the state a nominal collision is made from (from pool `Z`). Both
//! intervals are taken at level `delta / 2` and the largest feasible `gamma`
//! is returned.
//!
//! The score recorded for a collision is the one of the state the colliding
//! move is taken from: the last state at which the shield could still have
//! stopped the robot. Nominal and shielded rollouts driven by the same random
//! stream follow the same path until the shield fires, so a shielded rollout
//! collides only if its nominal twin collides with every score along the way
//! below `gamma`.

mod grid;

use std::fmt;

use rand::Rng;

pub use grid::{Cell, GridConfig, Gridworld, ACTIONS, RECOVERABLE_SCORE, UNRECOVERABLE_SCORE};

use crate::binom::{check_alpha, clopper_pearson, BernoulliCounts, ConfidenceInterval};
use crate::error::{invalid, Error, Result};
use crate::rng::{domain, keyed_rng};

/// Shield threshold. `AlwaysBackup` stops before the first move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SafetyThreshold {
    At(f64),
    AlwaysBackup,
}

impl SafetyThreshold {
    pub fn fires(self, score: f64) -> bool {
        match self {
            SafetyThreshold::At(g) => score >= g,
            SafetyThreshold::AlwaysBackup => true,
        }
    }
}

impl fmt::Display for SafetyThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SafetyThreshold::At(g) => write!(f, "{g}"),
            SafetyThreshold::AlwaysBackup => f.write_str("ALWAYS_BACKUP"),
        }
    }
}

impl std::str::FromStr for SafetyThreshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ALWAYS_BACKUP" {
            return Ok(SafetyThreshold::AlwaysBackup);
        }
        match s.parse::<f64>() {
            Ok(g) if g.is_finite() && g >= 0.0 => Ok(SafetyThreshold::At(g)),
            _ => Err(invalid(format!("`{s}` is neither a threshold nor ALWAYS_BACKUP"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyMode {
    Nominal,
    Shielded(SafetyThreshold),
}

/// Outcome of one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rollout {
    pub safe: bool,
    pub success: bool,
    /// Score at the state the colliding move was taken from.
    pub first_unsafe_score: Option<f64>,
    /// Largest score seen at a state where a move was decided.
    pub peak_score: Option<f64>,
    pub steps: usize,
}

/// Runs one rollout. The random draws per step do not depend on the mode, so
/// equal streams couple nominal and shielded runs.
pub fn simulate_rollout<R: Rng + ?Sized>(world: &Gridworld, mode: PolicyMode, rng: &mut R) -> Rollout {
    let starts = world.starts();
    let mut pos = starts[rng.random_range(0..starts.len())];
    let mut peak: Option<f64> = None;
    let epsilon = world.config().epsilon;
    for t in 0..world.config().horizon {
        if pos == world.goal() {
            return finished(true, true, None, peak, t);
        }
        let score = world.score_unchecked(pos);
        if let PolicyMode::Shielded(gamma) = mode {
            if gamma.fires(score) {
                return finished(true, false, None, peak, t);
            }
        }
        peak = Some(peak.map_or(score, |p: f64| p.max(score)));
        let explore = rng.random::<f64>() < epsilon;
        let random_action = rng.random_range(0..ACTIONS.len());
        let action = if explore { random_action } else { world.greedy_action(pos) };
        let next = world.step(pos, action);
        if world.is_obstacle(next) {
            return finished(false, false, Some(score), peak, t + 1);
        }
        pos = next;
    }
    let horizon = world.config().horizon;
    finished(true, pos == world.goal(), None, peak, horizon)
}

fn finished(safe: bool, success: bool, first_unsafe_score: Option<f64>, peak_score: Option<f64>, steps: usize) -> Rollout {
    Rollout {
        safe,
        success,
        first_unsafe_score,
        peak_score,
        steps,
    }
}

/// `n` nominal rollouts on streams `0..n` of `(seed, pool)`.
pub fn nominal_rollouts(world: &Gridworld, n: usize, seed: u64, pool: u64) -> Vec<Rollout> {
    (0..n)
        .map(|i| simulate_rollout(world, PolicyMode::Nominal, &mut keyed_rng(seed, pool, i as u64)))
        .collect()
}

/// Calibration data for threshold selection.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationData {
    /// One flag per rollout of the first pool, true when it collided.
    pub unsafe_flags: Vec<bool>,
    /// Scores at the collision-making state of each colliding rollout of the
    /// second pool.
    pub scores: Vec<f64>,
}

impl CalibrationData {
    pub fn from_rollouts(safety_pool: &[Rollout], score_pool: &[Rollout]) -> Self {
        Self {
            unsafe_flags: safety_pool.iter().map(|r| !r.safe).collect(),
            scores: score_pool.iter().filter_map(|r| r.first_unsafe_score).collect(),
        }
    }
}

/// Collects `n` safety flags and the unsafe-state scores of `n_pool` further
/// rollouts, from disjoint random streams.
pub fn collect_calibration_data(world: &Gridworld, n: usize, n_pool: usize, seed: u64) -> CalibrationData {
    let w = nominal_rollouts(world, n, seed, domain::SAFETY_POOL);
    let z = nominal_rollouts(world, n_pool, seed, domain::FIRST_UNSAFE_POOL);
    CalibrationData::from_rollouts(&w, &z)
}

/// Selected threshold and the bound that certifies it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetySelection {
    pub threshold: SafetyThreshold,
    /// `r_hi * (1 - c_lo)` at the selected threshold; 0 for `AlwaysBackup`.
    pub bound: f64,
    /// Interval on the nominal collision rate.
    pub unsafe_rate: ConfidenceInterval,
}

fn check_xi(xi: f64) -> Result<()> {
    if xi.is_nan() || xi < 0.0 {
        return Err(invalid(format!("xi must be nonnegative, got {xi}")));
    }
    Ok(())
}

/// Interval on the nominal collision rate at level `delta / 2`.
pub fn unsafe_rate_interval(unsafe_flags: &[bool], delta: f64) -> Result<ConfidenceInterval> {
    check_alpha(delta)?;
    clopper_pearson(BernoulliCounts::from_indicators(unsafe_flags.iter().copied()), delta / 2.0)
}

/// `r_hi * (1 - c_lo)` for one threshold, computed directly.
pub fn safety_bound(unsafe_flags: &[bool], scores: &[f64], gamma: SafetyThreshold, delta: f64) -> Result<f64> {
    let r = unsafe_rate_interval(unsafe_flags, delta)?;
    if gamma == SafetyThreshold::AlwaysBackup {
        return Ok(0.0);
    }
    let c = clopper_pearson(BernoulliCounts::from_indicators(scores.iter().map(|&s| gamma.fires(s))), delta / 2.0)?;
    Ok(r.hi() * (1.0 - c.lo()))
}

/// Largest threshold among the observed scores, 1 and 0 whose bound is at
/// most `xi`; `AlwaysBackup` when none is.
pub fn select_safety_threshold(unsafe_flags: &[bool], scores: &[f64], xi: f64, delta: f64) -> Result<SafetySelection> {
    check_xi(xi)?;
    let r = unsafe_rate_interval(unsafe_flags, delta)?;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = sorted.iter().copied().chain([0.0, 1.0]).collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    let n = sorted.len() as u64;
    for gamma in candidates {
        let fired = n - sorted.partition_point(|&s| s < gamma) as u64;
        let c = clopper_pearson(BernoulliCounts::new(fired, n)?, delta / 2.0)?;
        let bound = r.hi() * (1.0 - c.lo());
        if bound <= xi {
            return Ok(SafetySelection {
                threshold: SafetyThreshold::At(gamma),
                bound,
                unsafe_rate: r,
            });
        }
    }
    Ok(SafetySelection {
        threshold: SafetyThreshold::AlwaysBackup,
        bound: 0.0,
        unsafe_rate: r,
    })
}

/// Safety and success rates of the shielded policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShieldEvaluation {
    pub trials: usize,
    pub safety_rate: f64,
    pub success_rate: f64,
}

pub fn evaluate_shield(world: &Gridworld, threshold: SafetyThreshold, trials: usize, seed: u64) -> Result<ShieldEvaluation> {
    if trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let (mut safe, mut success) = (0usize, 0usize);
    for i in 0..trials {
        let r = simulate_rollout(
            world,
            PolicyMode::Shielded(threshold),
            &mut keyed_rng(seed, domain::SHIELD_EVAL, i as u64),
        );
        safe += usize::from(r.safe);
        success += usize::from(r.success);
    }
    Ok(ShieldEvaluation {
        trials,
        safety_rate: safe as f64 / trials as f64,
        success_rate: success as f64 / trials as f64,
    })
}

/// Monte-Carlo estimate of the shielded collision probability for every
/// threshold at once, from nominal rollouts and the coupling argument.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsafetyOracle {
    rollouts: usize,
    /// Peak scores of colliding rollouts, ascending.
    collision_peaks: Vec<f64>,
}

impl UnsafetyOracle {
    pub fn estimate(world: &Gridworld, rollouts: usize, seed: u64) -> Result<Self> {
        if rollouts == 0 {
            return Err(invalid("at least one rollout is required"));
        }
        let mut collision_peaks: Vec<f64> = (0..rollouts)
            .filter_map(|i| {
                let r = simulate_rollout(world, PolicyMode::Nominal, &mut keyed_rng(seed, domain::ORACLE, i as u64));
                if r.safe {
                    None
                } else {
                    r.peak_score
                }
            })
            .collect();
        collision_peaks.sort_by(f64::total_cmp);
        Ok(Self {
            rollouts,
            collision_peaks,
        })
    }

    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    /// Collision probability of the nominal policy.
    pub fn nominal_unsafe_rate(&self) -> f64 {
        self.collision_peaks.len() as f64 / self.rollouts as f64
    }

    /// Collision probability of the shielded policy.
    pub fn p_unsafe(&self, threshold: SafetyThreshold) -> f64 {
        match threshold {
            SafetyThreshold::AlwaysBackup => 0.0,
            SafetyThreshold::At(g) => {
                self.collision_peaks.partition_point(|&p| p < g) as f64 / self.rollouts as f64
            }
        }
    }

    /// Standard error of [`Self::p_unsafe`].
    pub fn standard_error(&self, threshold: SafetyThreshold) -> f64 {
        let p = self.p_unsafe(threshold);
        (p * (1.0 - p) / self.rollouts as f64).sqrt()
    }
}

/// Uncertified baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// `gamma = 0.5`.
    Naive,
    /// `gamma = xi`.
    XiNaive,
}

pub fn baseline_thresholds(mode: Baseline, xi: f64) -> SafetyThreshold {
    match mode {
        Baseline::Naive => SafetyThreshold::At(0.5),
        Baseline::XiNaive => SafetyThreshold::At(xi),
    }
}
