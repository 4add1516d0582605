//! Line-oriented text formats.
//!
//! Every reader skips blank lines and lines starting with `#`, and reports
//! malformed input with its 1-based line number. Fields are separated by
//! whitespace or commas.
//!
//! | file | one line |
//! |------|----------|
//! | prediction log | `top_conf pred label` |
//! | cascade log | `label conf_0 pred_0 ... conf_{M-1} pred_{M-1}` |
//! | costs | `cost_<m> = <value>` for `m = 0..M` |
//! | cascade thresholds | `gamma_0 ... gamma_{M-2}`, `DISABLED` spelled out |
//! | rollout log | `safe success score`, flags `0`/`1`, score `null` when safe |
//! | safety threshold | a number or `ALWAYS_BACKUP` |
//!
//! Reliability and accuracy-confidence data are written as CSV with a header
//! row; absent values are left empty.

use std::fmt::Write as _;

use crate::calibrate::{parse_num, PredictionRecord};
use crate::cascade::{BranchCosts, BranchOutput, CascadeRecord, Threshold, ThresholdVector};
use crate::error::{parse_err, Error, Result};
use crate::metrics::{CurvePoint, ReliabilityBin};
use crate::safeplan::{Rollout, SafetyThreshold};

/// Marker for an absent score in rollout logs.
pub const NULL_SCORE: &str = "null";

fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            return None;
        }
        let fields = l
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        Some((i + 1, fields))
    })
}

fn with_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => parse_err(line, other.to_string()),
    })
}

/// Formats `x` with 15 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exponent) {
        return format!("{x:.14e}");
    }
    let decimals = (14 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn read_prediction_log(text: &str) -> Result<Vec<PredictionRecord>> {
    content_lines(text)
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(parse_err(line, format!("expected `top_conf pred label`, found {} fields", f.len())));
            }
            with_line(
                line,
                PredictionRecord::new(parse_num(line, f[0])?, parse_num(line, f[1])?, parse_num(line, f[2])?),
            )
        })
        .collect()
}

pub fn write_prediction_log(records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{} {} {}", r.top_conf, r.pred_label, r.true_label);
    }
    out
}

pub fn read_cascade_log(text: &str) -> Result<Vec<CascadeRecord>> {
    let mut records = Vec::new();
    for (line, f) in content_lines(text) {
        if f.len() < 5 || f.len() % 2 == 0 {
            return Err(parse_err(line, "expected `label` followed by at least two `conf pred` pairs"));
        }
        let label = parse_num(line, f[0])?;
        let branches = f[1..]
            .chunks(2)
            .map(|p| {
                Ok(BranchOutput {
                    conf: parse_num(line, p[0])?,
                    pred: parse_num(line, p[1])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = with_line(line, CascadeRecord::new(branches, label))?;
        if let Some(first) = records.first().map(CascadeRecord::num_branches) {
            if record.num_branches() != first {
                return Err(parse_err(line, format!("{} branches, expected {first}", record.num_branches())));
            }
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_cascade_log(records: &[CascadeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{}", r.label());
        for b in r.branches() {
            let _ = write!(out, " {} {}", b.conf, b.pred);
        }
        out.push('\n');
    }
    out
}

pub fn read_costs(text: &str) -> Result<BranchCosts> {
    let mut costs: Vec<Option<f64>> = Vec::new();
    let mut last_line = 0;
    for (line, _) in content_lines(text) {
        last_line = line;
        let raw = text.lines().nth(line - 1).expect("line exists").trim();
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| parse_err(line, "expected `cost_<m> = <value>`"))?;
        let m: usize = key
            .trim()
            .strip_prefix("cost_")
            .and_then(|m| m.parse().ok())
            .ok_or_else(|| parse_err(line, format!("unknown key `{}`", key.trim())))?;
        if costs.len() <= m {
            costs.resize(m + 1, None);
        }
        if costs[m].replace(parse_num(line, value.trim())?).is_some() {
            return Err(parse_err(line, format!("cost_{m} given twice")));
        }
    }
    let costs = costs
        .into_iter()
        .enumerate()
        .map(|(m, c)| c.ok_or_else(|| parse_err(last_line.max(1), format!("cost_{m} is missing"))))
        .collect::<Result<Vec<_>>>()?;
    with_line(last_line.max(1), BranchCosts::new(costs))
}

pub fn write_costs(costs: &BranchCosts) -> String {
    costs
        .as_slice()
        .iter()
        .enumerate()
        .map(|(m, c)| format!("cost_{m} = {c}\n"))
        .collect()
}

pub fn read_thresholds(text: &str) -> Result<ThresholdVector> {
    let mut lines = content_lines(text);
    let (line, fields) = lines.next().ok_or(Error::EmptyInput)?;
    if let Some((extra, _)) = lines.next() {
        return Err(parse_err(extra, "thresholds must be on a single line"));
    }
    let gammas = fields
        .iter()
        .map(|f| with_line(line, f.parse::<Threshold>()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ThresholdVector::new(gammas))
}

pub fn write_thresholds(thresholds: &ThresholdVector) -> String {
    format!("{thresholds}\n")
}

fn parse_flag(line: usize, s: &str) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(parse_err(line, format!("expected 0 or 1, found `{s}`"))),
    }
}

pub fn read_rollout_log(text: &str) -> Result<Vec<Rollout>> {
    content_lines(text)
        .map(|(line, f)| {
            if f.len() != 3 {
                return Err(parse_err(line, format!("expected `safe success score`, found {} fields", f.len())));
            }
            let safe = parse_flag(line, f[0])?;
            let success = parse_flag(line, f[1])?;
            let score = if f[2] == NULL_SCORE {
                None
            } else {
                Some(parse_num::<f64>(line, f[2])?)
            };
            if score.is_some() == safe {
                return Err(parse_err(line, "a score is present exactly when the rollout is unsafe"));
            }
            Ok(Rollout {
                safe,
                success,
                first_unsafe_score: score,
                peak_score: None,
                steps: 0,
            })
        })
        .collect()
}

pub fn write_rollout_log(rollouts: &[Rollout]) -> String {
    let mut out = String::new();
    for r in rollouts {
        let score = r.first_unsafe_score.map_or_else(|| NULL_SCORE.to_string(), |s| s.to_string());
        let _ = writeln!(out, "{} {} {score}", u8::from(r.safe), u8::from(r.success));
    }
    out
}

pub fn read_safety_threshold(text: &str) -> Result<SafetyThreshold> {
    let mut lines = content_lines(text);
    let (line, fields) = lines.next().ok_or(Error::EmptyInput)?;
    if fields.len() != 1 || lines.next().is_some() {
        return Err(parse_err(line, "expected a single threshold"));
    }
    with_line(line, fields[0].parse())
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// Columns: `bin,lower_edge,upper_edge,count,mean_conf,accuracy,conf_lo,conf_hi`.
/// `conf_lo`/`conf_hi` bound the bin's confidence intervals when every
/// prediction in it carries one.
pub fn write_reliability_csv(bins: &[ReliabilityBin]) -> String {
    let mut out = String::from("bin,lower_edge,upper_edge,count,mean_conf,accuracy,conf_lo,conf_hi\n");
    for (k, b) in bins.iter().enumerate() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{}",
            fmt_sig(b.lower_edge),
            fmt_sig(b.upper_edge),
            b.count,
            opt(b.mean_conf),
            opt(b.accuracy),
            opt(b.conf_range.map(|c| c.lo())),
            opt(b.conf_range.map(|c| c.hi())),
        );
    }
    out
}

/// Columns: `threshold,count,accuracy,lower_count,lower_accuracy,upper_count,upper_accuracy`.
/// The `lower_`/`upper_` columns condition on the interval's lower or upper
/// end reaching the threshold.
pub fn write_curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("threshold,count,accuracy,lower_count,lower_accuracy,upper_count,upper_accuracy\n");
    let pair = |p: Option<(f64, usize)>| match p {
        Some((acc, n)) => format!("{n},{}", fmt_sig(acc)),
        None => ",".to_string(),
    };
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(p.threshold),
            p.count,
            fmt_sig(p.accuracy),
            pair(p.lower),
            pair(p.upper)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0 - 0.025f64.powf(0.1)), "0.308497107818761");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(123.456), "123.456");
        assert!(fmt_sig(1e-9).contains('e'));
    }

    #[test]
    fn prediction_log_round_trip_and_errors() {
        let text = "# header\n0.9 1 1\n0.25,0,3\n\n1 2 2\n";
        let records = read_prediction_log(text).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[1].true_label, 3);
        assert_eq!(read_prediction_log(&write_prediction_log(&records)).unwrap(), records);
        let err = read_prediction_log("0.9 1 1\n1.5 1 1\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = read_prediction_log("0.9 1\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "{err}");
    }

    #[test]
    fn cascade_log_round_trip_and_errors() {
        let text = "3 0.9 3 0.8 2\n1 0.1 0 0.99 1\n";
        let records = read_cascade_log(text).unwrap();
        assert_eq!(records[0].branch(0), BranchOutput { conf: 0.9, pred: 3 });
        assert_eq!(read_cascade_log(&write_cascade_log(&records)).unwrap(), records);
        let err = read_cascade_log("3 0.9 3 0.8 2\n1 0.1 0 0.99 1 0.5 1\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        assert!(read_cascade_log("3 0.9 3\n").is_err());
    }

    #[test]
    fn costs_round_trip_and_errors() {
        let costs = read_costs("# per exit\ncost_1 = 4\ncost_0 = 1.5\n").unwrap();
        assert_eq!(costs.as_slice(), &[1.5, 4.0]);
        assert_eq!(read_costs(&write_costs(&costs)).unwrap(), costs);
        assert!(read_costs("cost_0 = 1\ncost_2 = 3\n").is_err());
        assert!(read_costs("cost_0 = 1\ncost_0 = 3\n").is_err());
        assert!(read_costs("speed = 1\n").unwrap_err().to_string().starts_with("line 1:"));
    }

    #[test]
    fn thresholds_round_trip() {
        let t = ThresholdVector::new(vec![Threshold::At(0.25), Threshold::Disabled]);
        assert_eq!(write_thresholds(&t), "0.25 DISABLED\n");
        assert_eq!(read_thresholds(&write_thresholds(&t)).unwrap(), t);
        assert!(read_thresholds("0.2 maybe\n").is_err());
        assert_eq!(read_safety_threshold("ALWAYS_BACKUP\n").unwrap(), SafetyThreshold::AlwaysBackup);
        assert_eq!(read_safety_threshold("0.75").unwrap(), SafetyThreshold::At(0.75));
    }

    #[test]
    fn rollout_log_round_trip_and_errors() {
        let text = "1 1 null\n0 0 0.8125\n1 0 null\n";
        let rollouts = read_rollout_log(text).unwrap();
        assert_eq!(rollouts[1].first_unsafe_score, Some(0.8125));
        assert_eq!(write_rollout_log(&rollouts), text);
        assert!(read_rollout_log("1 1 0.5\n").is_err());
        assert!(read_rollout_log("0 0 null\n").is_err());
        assert!(read_rollout_log("2 0 null\n").unwrap_err().to_string().starts_with("line 1:"));
    }

    #[test]
    fn csv_headers_and_empty_cells() {
        use crate::metrics::{accuracy_confidence_curve, reliability_data, EvaluatedPrediction};
        let preds = [EvaluatedPrediction::new(0.9, None, true).unwrap()];
        let csv = write_reliability_csv(&reliability_data(&preds, 2).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bin,lower_edge,upper_edge,count,mean_conf,accuracy,conf_lo,conf_hi");
        assert_eq!(lines[1], "0,0,0.5,0,,,,");
        assert_eq!(lines[2], "1,0.5,1,1,0.9,1,,");
        let curve = write_curve_csv(&accuracy_confidence_curve(&preds, &[0.5]).unwrap());
        assert_eq!(curve.lines().nth(1), Some("0.5,1,1,,,,"));
    }
}
