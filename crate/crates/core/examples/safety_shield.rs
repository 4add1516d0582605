//! Shield threshold selection on the heavy-noise gridworld preset, where the
//! intuitive threshold 0.5 lets far too many collisions through.

use pacconf::safeplan::{
    baseline_thresholds, collect_calibration_data, evaluate_shield, select_safety_threshold, Baseline,
    GridConfig, Gridworld, UnsafetyOracle,
};

fn main() -> pacconf::Result<()> {
    let (xi, delta) = (0.1, 0.1);
    let world = Gridworld::new(GridConfig::heavy_noise())?;
    let data = collect_calibration_data(&world, 5000, 5000, 11);
    let selection = select_safety_threshold(&data.unsafe_flags, &data.scores, xi, delta)?;
    println!(
        "nominal unsafe rate in {}: {}, scores from {} collisions",
        data.unsafe_flags.len(),
        selection.unsafe_rate,
        data.scores.len()
    );
    println!("selected threshold {} with bound {:.4}", selection.threshold, selection.bound);

    let oracle = UnsafetyOracle::estimate(&world, 200_000, 12)?;
    for (name, threshold) in [
        ("certified", selection.threshold),
        ("naive", baseline_thresholds(Baseline::Naive, xi)),
        ("xi-naive", baseline_thresholds(Baseline::XiNaive, xi)),
    ] {
        let eval = evaluate_shield(&world, threshold, 20_000, 13)?;
        println!(
            "{name:<9} gamma={threshold:<6} true unsafe={:.4} safety rate={:.4} success rate={:.4}",
            oracle.p_unsafe(threshold),
            eval.safety_rate,
            eval.success_rate
        );
    }
    Ok(())
}
