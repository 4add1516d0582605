//! Certified early exit for a two-branch cascade: the selected threshold
//! against the uncertified softmax baseline, with exact excess errors from
//! the generator.

use pacconf::cascade::{
    baseline_threshold_softmax, evaluate_cascade, select_thresholds, BranchCosts, Candidates,
};
use pacconf::rng::trial_rng;
use pacconf::synth::TwoBranchGenerator;

fn main() -> pacconf::Result<()> {
    let generator = TwoBranchGenerator::default();
    let calibration = generator.sample(5000, &mut trial_rng(3, 0));
    let test = generator.sample(50_000, &mut trial_rng(3, 1));
    let costs = BranchCosts::new(vec![1.0, 5.0])?;

    for xi in [0.01, 0.02, 0.05, 0.1] {
        let selection = select_thresholds(&calibration, xi, 0.1, Candidates::Observed)?;
        let slow_error = evaluate_cascade(&calibration, &selection.thresholds, &costs)?.slow_error;
        let baseline = baseline_threshold_softmax(xi, slow_error);
        println!("xi = {xi}");
        for (name, thresholds) in [("certified", &selection.thresholds), ("softmax", &baseline)] {
            let gamma = thresholds.as_slice()[0];
            let eval = evaluate_cascade(&test, thresholds, &costs)?;
            println!(
                "  {name:<9} gamma={gamma:<8.4} true excess={:+.4} test excess={:+.4} mean cost={:.3}",
                generator.excess_error(gamma),
                eval.relative_error,
                eval.mean_cost,
            );
        }
    }
    Ok(())
}
