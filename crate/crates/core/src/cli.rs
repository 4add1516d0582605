//! Command-line surface.
//!
//! [`run`] parses arguments, executes one command and returns the process
//! exit code: 0 on success or a passing validation, 1 on a failing
//! validation, 2 on usage or input errors. Every command takes a single
//! `--seed`; identical arguments give byte-identical output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::binom::{clopper_pearson, BernoulliCounts};
use crate::calibrate::{fit_coverage_predictor, BinningScheme, CoverageTable};
use crate::cascade::{evaluate_cascade, select_thresholds, BranchCosts, Candidates};
use crate::error::{invalid, Error, Result};
use crate::io::{
    fmt_sig, read_cascade_log, read_costs, read_prediction_log, read_rollout_log, read_safety_threshold,
    read_thresholds, write_cascade_log, write_curve_csv, write_prediction_log, write_reliability_csv,
    write_rollout_log, write_thresholds,
};
use crate::metrics::{accuracy_confidence_curve, ece, induced_ece, reliability_data, EvaluatedPrediction};
use crate::rng::{domain, trial_rng};
use crate::safeplan::{
    evaluate_shield, nominal_rollouts, select_safety_threshold, CalibrationData, GridConfig, Gridworld,
    SafetyThreshold,
};
use crate::synth::{SyntheticCalibGenerator, TwoBranchGenerator};
use crate::validate::{
    is_nonincreasing, threshold_path, validate_cascade, validate_coverage, validate_safeplan,
    CascadeValidationConfig, CoverageConfig, SafeplanValidationConfig,
};

/// Exit code for a passing run.
pub const EXIT_OK: i32 = 0;
/// Exit code for a validation whose measured rate misses its limit.
pub const EXIT_FAIL: i32 = 1;
/// Exit code for usage and input errors.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pacconf", version, about = "PAC confidence intervals, certified cascades and safety shields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the Clopper-Pearson interval `lo hi` for S successes in N trials.
    CpInterval {
        s: u64,
        n: u64,
        alpha: f64,
    },
    /// Fit a coverage table to a prediction log.
    Calibrate(CalibrateArgs),
    /// ECE, induced ECE and reliability data for a prediction log.
    ///
    /// With `--out P`, writes `P.reliability.csv` (columns bin, lower_edge,
    /// upper_edge, count, mean_conf, accuracy, conf_lo, conf_hi) and
    /// `P.curve.csv` (columns threshold, count, accuracy, lower_count,
    /// lower_accuracy, upper_count, upper_accuracy). Empty cells mark absent
    /// values; the interval columns need `--table`.
    Eval(EvalArgs),
    /// Sample a prediction log with known per-bin accuracy.
    SynthCalib(SynthCalibArgs),
    /// Check the all-bins coverage rate of fitted tables against 1 - delta.
    ValidateCoverage(ValidateCoverageArgs),
    /// Sample a two-branch cascade log with known error rates.
    SynthCascade(SynthCascadeArgs),
    /// Select cascade thresholds certifying excess error at most xi.
    CascadeSelect(CascadeSelectArgs),
    /// Error, cost and exit fractions of a thresholded cascade.
    CascadeEval(CascadeEvalArgs),
    /// Check the cascade guarantee on synthetic two-branch data.
    ValidateCascade(ValidateCascadeArgs),
    /// Write nominal rollout logs for the collision flags and the scores.
    SafeplanCollect(SafeplanCollectArgs),
    /// Select a shield threshold certifying unsafety at most xi.
    SafeplanSelect(SafeplanSelectArgs),
    /// Safety and success rates of a shielded policy.
    SafeplanEval(SafeplanEvalArgs),
    /// Check the shield guarantee against a large rollout oracle.
    ValidateSafeplan(ValidateSafeplanArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Prediction log: `top_conf pred label` per line.
    #[arg(long)]
    input: PathBuf,
    /// Number of equal-width confidence bins K.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Coverage table destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    input: PathBuf,
    /// Coverage table remapping each confidence to its bin mean and interval.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Number of evaluation bins J.
    #[arg(long, default_value_t = crate::metrics::DEFAULT_ECE_BINS)]
    ece_bins: usize,
    /// Steps of the accuracy-confidence curve over [0, 1).
    #[arg(long, default_value_t = 20)]
    curve_steps: usize,
    /// Prefix of the CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CalibGenerator {
    /// Accuracy equals the bin midpoint, equal bin mass.
    Calibrated,
    /// Accuracy `0.3 + 0.6 * midpoint`, mass growing with confidence.
    Overconfident,
}

#[derive(Debug, Args)]
struct GeneratorArgs {
    #[arg(long, value_enum, default_value_t = CalibGenerator::Overconfident)]
    generator: CalibGenerator,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// Comma-separated per-bin accuracies, overriding the generator.
    #[arg(long, value_delimiter = ',', requires = "weights")]
    theta: Option<Vec<f64>>,
    /// Comma-separated per-bin masses, with `--theta`.
    #[arg(long, value_delimiter = ',', requires = "theta")]
    weights: Option<Vec<f64>>,
}

impl GeneratorArgs {
    fn build(&self) -> Result<SyntheticCalibGenerator> {
        if let (Some(theta), Some(weights)) = (&self.theta, &self.weights) {
            let scheme = BinningScheme::equal_width(theta.len())?;
            return SyntheticCalibGenerator::new(scheme, theta.clone(), weights.clone());
        }
        match self.generator {
            CalibGenerator::Calibrated => SyntheticCalibGenerator::calibrated(self.bins),
            CalibGenerator::Overconfident => SyntheticCalibGenerator::overconfident(self.bins),
        }
    }
}

#[derive(Debug, Args)]
struct SynthCalibArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateCoverageArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Shrink every interval by this factor around the bin mean.
    #[arg(long, default_value_t = 1.0)]
    shrink: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CascadeGeneratorArgs {
    /// Fast-branch accuracy at confidence 0.
    #[arg(long, default_value_t = 0.0)]
    fast_lo: f64,
    /// Fast-branch accuracy at confidence 1.
    #[arg(long, default_value_t = 1.0)]
    fast_hi: f64,
    #[arg(long, default_value_t = 0.8)]
    slow_accuracy: f64,
    #[arg(long, default_value_t = 10)]
    classes: i64,
}

impl CascadeGeneratorArgs {
    fn build(&self) -> Result<TwoBranchGenerator> {
        TwoBranchGenerator::new(self.fast_lo, self.fast_hi, self.slow_accuracy, self.classes)
    }
}

#[derive(Debug, Args)]
struct SynthCascadeArgs {
    #[command(flatten)]
    generator: CascadeGeneratorArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CascadeSelectArgs {
    /// Cascade log: `label conf_0 pred_0 ... conf_{M-1} pred_{M-1}` per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Scan `i / N` instead of the observed confidences.
    #[arg(long)]
    grid: Option<usize>,
    /// Threshold file destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CascadeEvalArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    thresholds: PathBuf,
    /// `cost_<m> = value` lines; unit costs per branch when omitted.
    #[arg(long)]
    costs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateCascadeArgs {
    #[command(flatten)]
    generator: CascadeGeneratorArgs,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Budgets for the monotonicity check, run on one extra calibration set.
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.04,0.08")]
    path_xis: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid config file.
    #[arg(long, conflicts_with = "preset")]
    grid: Option<PathBuf>,
    /// Built-in grid: trap-rows or heavy-noise.
    #[arg(long, default_value = "trap-rows")]
    preset: String,
}

impl GridArgs {
    fn build(&self) -> Result<Gridworld> {
        let config = match &self.grid {
            Some(path) => GridConfig::parse(&read(path)?)?,
            None => GridConfig::preset(&self.preset)?,
        };
        Gridworld::new(config)
    }
}

#[derive(Debug, Args)]
struct SafeplanCollectArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// Rollouts in the collision-flag log.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Rollouts in the score log.
    #[arg(long, default_value_t = 5000)]
    pool: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Collision-flag rollout log.
    #[arg(long)]
    out: PathBuf,
    /// Score rollout log, drawn from streams disjoint from `--out`.
    #[arg(long)]
    pool_out: PathBuf,
}

#[derive(Debug, Args)]
struct SafeplanSelectArgs {
    /// Rollout log whose collision flags bound the nominal unsafe rate.
    #[arg(long)]
    rollouts: PathBuf,
    /// Rollout log whose unsafe entries supply the scores.
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SafeplanEvalArgs {
    #[command(flatten)]
    grid: GridArgs,
    /// File holding the threshold.
    #[arg(long, conflicts_with = "gamma")]
    threshold: Option<PathBuf>,
    /// Threshold value or ALWAYS_BACKUP.
    #[arg(long)]
    gamma: Option<SafetyThreshold>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateSafeplanArgs {
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 300)]
    trials: usize,
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long, default_value_t = 5000)]
    pool: usize,
    #[arg(long, default_value_t = 0.1)]
    xi: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 1_000_000)]
    oracle_rollouts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => invalid(format!("{}: {e}", path.display())),
        other => other,
    })
}

/// Report text, optional copy on disk, and whether it passed.
struct Outcome {
    text: String,
    passed: bool,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, passed: true }
    }
}

fn finish(text: String, passed: bool, out: Option<&Path>) -> Result<Outcome> {
    if let Some(path) = out {
        write(path, &text)?;
    }
    Ok(Outcome { text, passed })
}

fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::CpInterval { s, n, alpha } => {
            let ci = clopper_pearson(BernoulliCounts::new(s, n)?, alpha)?;
            Ok(Outcome::ok(format!("{} {}\n", fmt_sig(ci.lo()), fmt_sig(ci.hi()))))
        }
        Command::Calibrate(a) => {
            let records = in_file(&a.input, read_prediction_log(&read(&a.input)?))?;
            let table = fit_coverage_predictor(&records, &BinningScheme::equal_width(a.bins)?, a.delta)?;
            write(&a.out, &table.to_text())?;
            Ok(Outcome::ok(format!(
                "fitted {} bins on {} records at delta={}\n",
                a.bins,
                records.len(),
                a.delta
            )))
        }
        Command::Eval(a) => eval(a),
        Command::SynthCalib(a) => {
            let generator = a.generator.build()?;
            let records = generator.sample(a.n, &mut trial_rng(a.seed, 0));
            write(&a.out, &write_prediction_log(&records))?;
            Ok(Outcome::ok(format!("wrote {} records\n", records.len())))
        }
        Command::ValidateCoverage(a) => {
            let config = CoverageConfig {
                trials: a.trials,
                n: a.n,
                delta: a.delta,
                shrink: a.shrink,
            };
            let report = validate_coverage(&a.generator.build()?, config, a.seed)?;
            finish(format!("{report}\n"), report.passed(), a.out.as_deref())
        }
        Command::SynthCascade(a) => {
            let records = a.generator.build()?.sample(a.n, &mut trial_rng(a.seed, 0));
            write(&a.out, &write_cascade_log(&records))?;
            Ok(Outcome::ok(format!("wrote {} records\n", records.len())))
        }
        Command::CascadeSelect(a) => {
            let records = in_file(&a.input, read_cascade_log(&read(&a.input)?))?;
            let candidates = a.grid.map_or(Candidates::Observed, Candidates::Grid);
            let selection = select_thresholds(&records, a.xi, a.delta, candidates)?;
            write(&a.out, &write_thresholds(&selection.thresholds))?;
            Ok(Outcome::ok(format!(
                "thresholds: {}\nbound: {}\n",
                selection.thresholds,
                fmt_sig(selection.bound)
            )))
        }
        Command::CascadeEval(a) => {
            let records = in_file(&a.input, read_cascade_log(&read(&a.input)?))?;
            let thresholds = in_file(&a.thresholds, read_thresholds(&read(&a.thresholds)?))?;
            let costs = match &a.costs {
                Some(path) => in_file(path, read_costs(&read(path)?))?,
                None => BranchCosts::unit(records.first().ok_or(Error::EmptyInput)?.num_branches()),
            };
            let e = evaluate_cascade(&records, &thresholds, &costs)?;
            let exits: Vec<String> = e.exit_fractions.iter().map(|&f| fmt_sig(f)).collect();
            let text = format!(
                "error: {}\nslow error: {}\nrelative error: {}\nmean cost: {}\nexit fractions: {}\n",
                fmt_sig(e.error),
                fmt_sig(e.slow_error),
                fmt_sig(e.relative_error),
                fmt_sig(e.mean_cost),
                exits.join(" ")
            );
            finish(text, true, a.out.as_deref())
        }
        Command::ValidateCascade(a) => {
            let generator = a.generator.build()?;
            let config = CascadeValidationConfig {
                trials: a.trials,
                n: a.n,
                xi: a.xi,
                delta: a.delta,
            };
            let report = validate_cascade(&generator, config, a.seed)?;
            // the stream after the last trial
            let records = generator.sample(a.n, &mut trial_rng(a.seed, a.trials as u64));
            let path = threshold_path(&records, &a.path_xis, a.delta)?;
            let monotone = is_nonincreasing(&path);
            let xis: Vec<String> = a.path_xis.iter().map(|x| x.to_string()).collect();
            let gammas: Vec<String> = path.iter().map(|g| g.to_string()).collect();
            let text = format!(
                "{report}\nthreshold path over xi {}: {} {}\n",
                xis.join(","),
                gammas.join(" "),
                if monotone { "nonincreasing PASS" } else { "increasing FAIL" }
            );
            finish(text, report.passed() && monotone, a.out.as_deref())
        }
        Command::SafeplanCollect(a) => {
            let world = a.grid.build()?;
            let w = nominal_rollouts(&world, a.n, a.seed, domain::SAFETY_POOL);
            let z = nominal_rollouts(&world, a.pool, a.seed, domain::FIRST_UNSAFE_POOL);
            write(&a.out, &write_rollout_log(&w))?;
            write(&a.pool_out, &write_rollout_log(&z))?;
            let unsafe_count = |r: &[crate::safeplan::Rollout]| r.iter().filter(|r| !r.safe).count();
            Ok(Outcome::ok(format!(
                "collision log: {} unsafe of {}\nscore log: {} unsafe of {}\n",
                unsafe_count(&w),
                w.len(),
                unsafe_count(&z),
                z.len()
            )))
        }
        Command::SafeplanSelect(a) => {
            let w = in_file(&a.rollouts, read_rollout_log(&read(&a.rollouts)?))?;
            let z = in_file(&a.pool, read_rollout_log(&read(&a.pool)?))?;
            let data = CalibrationData::from_rollouts(&w, &z);
            let s = select_safety_threshold(&data.unsafe_flags, &data.scores, a.xi, a.delta)?;
            if let Some(path) = &a.out {
                write(path, &format!("{}\n", s.threshold))?;
            }
            Ok(Outcome::ok(format!(
                "threshold: {}\nbound: {}\nunsafe rate interval: {} {}\nscores: {}\n",
                s.threshold,
                fmt_sig(s.bound),
                fmt_sig(s.unsafe_rate.lo()),
                fmt_sig(s.unsafe_rate.hi()),
                data.scores.len()
            )))
        }
        Command::SafeplanEval(a) => {
            let world = a.grid.build()?;
            let threshold = match (&a.threshold, a.gamma) {
                (Some(path), _) => in_file(path, read_safety_threshold(&read(path)?))?,
                (None, Some(g)) => g,
                (None, None) => return Err(invalid("one of --threshold or --gamma is required")),
            };
            let e = evaluate_shield(&world, threshold, a.trials, a.seed)?;
            let text = format!(
                "threshold: {threshold}\ntrials: {}\nsafety rate: {}\nsuccess rate: {}\n",
                e.trials,
                fmt_sig(e.safety_rate),
                fmt_sig(e.success_rate)
            );
            finish(text, true, a.out.as_deref())
        }
        Command::ValidateSafeplan(a) => {
            let world = a.grid.build()?;
            let config = SafeplanValidationConfig {
                trials: a.trials,
                n: a.n,
                n_pool: a.pool,
                xi: a.xi,
                delta: a.delta,
                oracle_rollouts: a.oracle_rollouts,
            };
            let report = validate_safeplan(&world, config, a.seed)?;
            finish(format!("{report}\n"), report.passed(), a.out.as_deref())
        }
    }
}

fn eval(a: EvalArgs) -> Result<Outcome> {
    let records = in_file(&a.input, read_prediction_log(&read(&a.input)?))?;
    let raw: Vec<EvaluatedPrediction> = records.iter().map(EvaluatedPrediction::from_record).collect();
    let mut text = format!("records: {}\nece: {}\n", records.len(), fmt_sig(ece(&raw, a.ece_bins)?));
    let preds = match &a.table {
        Some(path) => {
            let table = in_file(path, CoverageTable::from_text(&read(path)?))?;
            let mapped = records
                .iter()
                .map(|r| EvaluatedPrediction::from_table(&table, r))
                .collect::<Result<Vec<_>>>()?;
            let range = induced_ece(&mapped, a.ece_bins)?;
            text += &format!(
                "table ece: {}\ninduced ece: {} {}\n",
                fmt_sig(ece(&mapped, a.ece_bins)?),
                fmt_sig(range.lo()),
                fmt_sig(range.hi())
            );
            mapped
        }
        None => raw,
    };
    if let Some(prefix) = &a.out {
        let steps = a.curve_steps.max(1);
        let thresholds: Vec<f64> = (0..steps).map(|i| i as f64 / steps as f64).collect();
        let suffixed = |suffix: &str| {
            let mut p = prefix.clone().into_os_string();
            p.push(suffix);
            PathBuf::from(p)
        };
        write(&suffixed(".reliability.csv"), &write_reliability_csv(&reliability_data(&preds, a.ece_bins)?))?;
        write(&suffixed(".curve.csv"), &write_curve_csv(&accuracy_confidence_curve(&preds, &thresholds)?))?;
    }
    Ok(Outcome::ok(text))
}

/// Runs the command line `args` (program name first), writing results to
/// `out` and diagnostics to `err`, and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return EXIT_ERROR;
        }
    };
    match execute(cli.command) {
        Ok(outcome) => {
            let _ = out.write_all(outcome.text.as_bytes());
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}
