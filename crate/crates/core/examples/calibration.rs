//! Fits a coverage table to an overconfident synthetic model and scores it:
//! per-bin intervals against the true accuracies, ECE of the raw and the
//! remapped confidences, and the induced ECE range.

use pacconf::calibrate::fit_coverage_predictor;
use pacconf::metrics::{ece, induced_ece, reliability_data, EvaluatedPrediction, DEFAULT_ECE_BINS};
use pacconf::rng::trial_rng;
use pacconf::synth::SyntheticCalibGenerator;

fn main() -> pacconf::Result<()> {
    let generator = SyntheticCalibGenerator::overconfident(10)?;
    let calibration = generator.sample(2000, &mut trial_rng(7, 0));
    let test = generator.sample(20_000, &mut trial_rng(7, 1));

    let table = fit_coverage_predictor(&calibration, generator.scheme(), 0.1)?;
    println!("bin  trials  true acc  interval");
    for (k, (bin, theta)) in table.bins().iter().zip(generator.theta()).enumerate() {
        let mark = if bin.interval.contains(*theta) { "" } else { "  <- missed" };
        println!("{k:>3} {:>7}  {theta:>8.3}  {}{mark}", bin.trials, bin.interval);
    }

    let raw: Vec<EvaluatedPrediction> = test.iter().map(EvaluatedPrediction::from_record).collect();
    let mapped = test
        .iter()
        .map(|r| EvaluatedPrediction::from_table(&table, r))
        .collect::<pacconf::Result<Vec<_>>>()?;
    let j = DEFAULT_ECE_BINS;
    println!("\nraw ECE      {:.4}", ece(&raw, j)?);
    println!("remapped ECE {:.4}", ece(&mapped, j)?);
    println!("induced ECE  {}", induced_ece(&mapped, j)?);

    println!("\nreliability of the remapped confidences:");
    for b in reliability_data(&mapped, j)?.iter().filter(|b| b.count > 0) {
        println!(
            "  [{:.2}, {:.2}]  n={:>5}  conf={:.3}  acc={:.3}",
            b.lower_edge,
            b.upper_edge,
            b.count,
            b.mean_conf.unwrap_or(f64::NAN),
            b.accuracy.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
