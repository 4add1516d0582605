//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. Runs without the libtest harness so the lines are always shown.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use pacconf::binom::ConfidenceInterval;
use pacconf::calibrate::{fit_coverage_predictor, BinningScheme};
use pacconf::cascade::BranchCosts;
use pacconf::metrics::{ece, induced_ece, reliability_data, EvaluatedPrediction};
use pacconf::rng::trial_rng;
use pacconf::safeplan::{GridConfig, Gridworld};
use pacconf::synth::{SyntheticCalibGenerator, TwoBranchGenerator};
use pacconf::validate::{
    check_optimality, cp_coverage_grid, cp_oracle_discrepancy, is_nonincreasing, threshold_path, validate_cascade,
    validate_coverage, validate_safeplan, CascadeValidationConfig, CoverageConfig, SafeplanValidationConfig,
};
use rand::Rng;

use common::{pacconf, path_str};

struct Verdict {
    pass: bool,
    detail: String,
}

fn criterion(name: &str, limit: Duration, check: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let v = check();
    let elapsed = start.elapsed();
    let pass = v.pass && elapsed <= limit;
    println!(
        "{} {name}: {} [{:.1}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        v.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn cp_equivalence() -> Verdict {
    let worst = cp_oracle_discrepancy(50, &[0.1, 0.05, 0.01]).unwrap();
    Verdict {
        pass: worst <= 1e-8,
        detail: format!("max |beta form - tail form| over s <= n <= 50 = {worst:.2e} (tolerance 1e-8)"),
    }
}

fn cp_coverage() -> Verdict {
    let thetas: Vec<f64> = (1..=19).map(|i| f64::from(i) * 0.05).collect();
    let cells = cp_coverage_grid(&thetas, &[10, 100, 1000], &[0.1, 0.01], 10_000, 1).unwrap();
    let failed: Vec<String> = cells.iter().filter(|c| !c.passed()).map(|c| c.to_string()).collect();
    let slack = cells
        .iter()
        .map(|c| c.coverage - c.required)
        .fold(f64::INFINITY, f64::min);
    Verdict {
        pass: failed.is_empty(),
        detail: format!(
            "{}/{} cells at or above 1 - alpha - 3 sigma, smallest margin {slack:.4}{}",
            cells.len() - failed.len(),
            cells.len(),
            if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join("; ")) }
        ),
    }
}

fn calibration_guarantee() -> Verdict {
    let g = SyntheticCalibGenerator::overconfident(10).unwrap();
    let report = validate_coverage(&g, CoverageConfig::default(), 2024).unwrap();
    let control = validate_coverage(&g, CoverageConfig { shrink: 4.0, ..CoverageConfig::default() }, 2024).unwrap();
    Verdict {
        pass: report.passed() && !control.passed(),
        detail: format!(
            "K=10 n=2000 delta=0.1: failure rate {:.3} <= {:.3}; 4x shrunk control {:.3} {}",
            report.failure_rate(),
            report.limit,
            control.failure_rate(),
            if control.passed() { "unexpectedly passes" } else { "fails as required" }
        ),
    }
}

fn cascade_guarantee() -> Verdict {
    let g = TwoBranchGenerator::default();
    let report = validate_cascade(&g, CascadeValidationConfig::default(), 77).unwrap();
    let xis = [0.01, 0.02, 0.04, 0.08];
    let records = g.sample(5000, &mut trial_rng(78, 0));
    let path = threshold_path(&records, &xis, 0.1).unwrap();
    let monotone = is_nonincreasing(&path);
    let shown: Vec<String> = path.iter().map(|t| t.to_string()).collect();
    Verdict {
        pass: report.passed() && monotone,
        detail: format!(
            "M=2 n=5000 xi=0.05 delta=0.1: violation rate {:.3} <= {:.3}; gamma over xi {:?} = [{}] {}",
            report.violation_rate(),
            report.limit,
            xis,
            shown.join(", "),
            if monotone { "nonincreasing" } else { "NOT nonincreasing" }
        ),
    }
}

fn cascade_optimality() -> Verdict {
    let mut failures = Vec::new();
    let mut feasible = 0;
    for i in 0..20 {
        let mut rng = trial_rng(91, i);
        let generator = TwoBranchGenerator::random(&mut rng);
        let records = generator.sample(2000, &mut rng);
        let fast_cost = 1.0;
        let costs = BranchCosts::new(vec![fast_cost, fast_cost + rng.random_range(0.5..10.0)]).unwrap();
        let xi = rng.random_range(0.0..0.1);
        let check = check_optimality(&records, xi, 0.1, &costs).unwrap();
        feasible += check.feasible_candidates;
        if !check.passed() {
            failures.push(format!("instance {i}: {check}"));
        }
    }
    Verdict {
        pass: failures.is_empty(),
        detail: format!(
            "20 random instances, selected threshold has the least mean cost among {feasible} feasible candidates{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    }
}

fn shield_guarantee() -> Verdict {
    let config = SafeplanValidationConfig::default();
    let trap = Gridworld::new(GridConfig::trap_rows()).unwrap();
    let report = validate_safeplan(&trap, config, 5).unwrap();
    let heavy = Gridworld::new(GridConfig::heavy_noise()).unwrap();
    let noisy = validate_safeplan(&heavy, config, 6).unwrap();
    let baseline = noisy.baseline;
    Verdict {
        pass: report.passed() && noisy.passed() && baseline.violates(),
        detail: format!(
            "|W|=5000 xi=0.1 delta=0.1 vs 1e6-rollout oracle: violation rate {:.4} <= {:.3} \
             (heavy noise: {:.4}); naive gamma=0.5 under heavy noise has p_unsafe {:.4} {} xi",
            report.violation_rate(),
            report.limit,
            noisy.violation_rate(),
            baseline.p_unsafe,
            if baseline.violates() { ">" } else { "NOT >" }
        ),
    }
}

fn metrics_sandwich() -> Verdict {
    let mut violations = 0;
    let (mut collapsible, mut collapse_failures) = (0, 0);
    for i in 0..100 {
        let mut rng = trial_rng(404, i);
        let k = rng.random_range(1..=25);
        let theta: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();
        let scheme = BinningScheme::equal_width(k).unwrap();
        let g = SyntheticCalibGenerator::new(scheme.clone(), theta, weights).unwrap();
        let n = rng.random_range(50..3000);
        let table = fit_coverage_predictor(&g.sample(n, &mut rng), &scheme, 0.1).unwrap();
        let test = g.sample(2000, &mut rng);
        let j = rng.random_range(1..=40);
        let preds: Vec<_> = test.iter().map(|r| EvaluatedPrediction::from_table(&table, r).unwrap()).collect();
        let point = ece(&preds, j).unwrap();
        let range = induced_ece(&preds, j).unwrap();
        if !(range.lo() <= point + 1e-12 && point <= range.hi() + 1e-12) {
            violations += 1;
        }
        // zero-width intervals: the range collapses when each evaluation
        // bin holds a single confidence value
        let degenerate = table.map_intervals(|mean, _| ConfidenceInterval::point(mean)).unwrap();
        let points: Vec<_> = test.iter().map(|r| EvaluatedPrediction::from_table(&degenerate, r).unwrap()).collect();
        let single_valued = reliability_data(&points, j)
            .unwrap()
            .iter()
            .all(|b| b.conf_range.is_none_or(|c| c.width() == 0.0));
        if single_valued {
            collapsible += 1;
            let e = ece(&points, j).unwrap();
            let r = induced_ece(&points, j).unwrap();
            if (r.lo() - e).abs() > 1e-12 || (r.hi() - e).abs() > 1e-12 {
                collapse_failures += 1;
            }
        }
    }
    let exact = collapse_exact();
    Verdict {
        pass: violations == 0 && collapse_failures == 0 && collapsible > 0 && exact,
        detail: format!(
            "100 fitted tables: {violations} sandwich violations; zero-width intervals collapse to the point ECE \
             on {}/{collapsible} tables with single-valued evaluation bins; fixed collapse case {}",
            collapsible - collapse_failures,
            if exact { "exact" } else { "NOT exact" }
        ),
    }
}

fn collapse_exact() -> bool {
    let mut rng = trial_rng(405, 0);
    let preds: Vec<_> = (0..5000)
        .map(|i| {
            let c = 0.025 + 0.05 * f64::from(i % 20);
            EvaluatedPrediction::new(c, Some(ConfidenceInterval::point(c).unwrap()), rng.random_bool(c)).unwrap()
        })
        .collect();
    let e = ece(&preds, 20).unwrap();
    let r = induced_ece(&preds, 20).unwrap();
    r.lo() == r.hi() && (r.lo() - e).abs() <= 1e-12
}

/// Every command run twice in separate directories, comparing stdout and
/// every output file byte for byte.
fn determinism() -> Verdict {
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2).map(|_| run_every_command()).collect();
    let mismatched: Vec<&str> = runs[0]
        .iter()
        .zip(&runs[1])
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    Verdict {
        pass: mismatched.is_empty() && runs[0].len() == runs[1].len(),
        detail: format!(
            "{} outputs of 13 commands identical across seeded reruns{}",
            runs[0].len(),
            if mismatched.is_empty() { String::new() } else { format!("; differing: {}", mismatched.join(", ")) }
        ),
    }
}

fn run_every_command() -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let (preds, table, eval, clog, thr, costs, w, z, gamma) = (
        p("preds.txt"),
        p("table.txt"),
        p("eval"),
        p("cascade.txt"),
        p("thresholds.txt"),
        p("costs.txt"),
        p("w.txt"),
        p("z.txt"),
        p("gamma.txt"),
    );
    fs::write(&costs, "cost_0 = 1\ncost_1 = 3.5\n").unwrap();
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("cp-interval", vec!["cp-interval", "7", "31", "0.05"]),
        ("synth-calib", vec!["synth-calib", "--n", "2000", "--seed", "9", "--out", path_str(&preds)]),
        ("calibrate", vec!["calibrate", "--input", path_str(&preds), "--out", path_str(&table)]),
        ("eval", vec!["eval", "--input", path_str(&preds), "--table", path_str(&table), "--out", path_str(&eval)]),
        ("validate-coverage", vec!["validate-coverage", "--trials", "30", "--n", "500", "--seed", "9"]),
        ("synth-cascade", vec!["synth-cascade", "--n", "2000", "--seed", "9", "--out", path_str(&clog)]),
        ("cascade-select", vec!["cascade-select", "--input", path_str(&clog), "--xi", "0.05", "--out", path_str(&thr)]),
        ("cascade-eval", vec![
            "cascade-eval", "--input", path_str(&clog), "--thresholds", path_str(&thr), "--costs", path_str(&costs),
        ]),
        ("validate-cascade", vec!["validate-cascade", "--trials", "10", "--n", "1000", "--seed", "9"]),
        ("safeplan-collect", vec![
            "safeplan-collect", "--n", "2000", "--pool", "2000", "--seed", "9", "--out", path_str(&w), "--pool-out",
            path_str(&z),
        ]),
        ("safeplan-select", vec![
            "safeplan-select", "--rollouts", path_str(&w), "--pool", path_str(&z), "--xi", "0.1", "--out",
            path_str(&gamma),
        ]),
        ("safeplan-eval", vec!["safeplan-eval", "--threshold", path_str(&gamma), "--trials", "2000", "--seed", "9"]),
        ("validate-safeplan", vec![
            "validate-safeplan", "--trials", "10", "--n", "1000", "--pool", "1000", "--oracle-rollouts", "20000",
            "--seed", "9",
        ]),
    ];
    let mut outputs = Vec::new();
    for (name, args) in commands {
        let (code, out, err) = pacconf(&args);
        outputs.push((format!("{name} exit"), format!("{code} {err}").into_bytes()));
        outputs.push((format!("{name} stdout"), out.into_bytes()));
    }
    let files = [&preds, &table, &clog, &thr, &w, &z, &gamma];
    let csv = [p("eval.reliability.csv"), p("eval.curve.csv")];
    for f in files.into_iter().chain(&csv) {
        outputs.push((file_name(f), fs::read(f).unwrap_or_default()));
    }
    outputs
}

fn file_name(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

fn main() {
    let secs = Duration::from_secs;
    let results = [
        criterion("CP oracle equivalence", secs(10), cp_equivalence),
        criterion("CP coverage grid", secs(300), cp_coverage),
        criterion("calibration coverage guarantee", secs(120), calibration_guarantee),
        criterion("cascade excess-error guarantee", secs(300), cascade_guarantee),
        criterion("cascade cost optimality", secs(60), cascade_optimality),
        criterion("shield safety guarantee", secs(600), shield_guarantee),
        criterion("metrics sandwich", secs(30), metrics_sandwich),
        criterion("determinism", secs(120), determinism),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
