//! Reduced-size runs of the Monte-Carlo harnesses. The `validate-*`
//! subcommands run them at full size.

use pacconf::safeplan::{GridConfig, Gridworld};
use pacconf::synth::{SyntheticCalibGenerator, TwoBranchGenerator};
use pacconf::validate::{
    validate_cascade, validate_coverage, validate_safeplan, CascadeValidationConfig, CoverageConfig,
    SafeplanValidationConfig,
};

fn main() -> pacconf::Result<()> {
    let generator = SyntheticCalibGenerator::overconfident(10)?;
    let config = CoverageConfig {
        trials: 300,
        ..CoverageConfig::default()
    };
    println!("{}\n", validate_coverage(&generator, config, 1)?);
    let shrunk = CoverageConfig { shrink: 4.0, ..config };
    println!("{}\n", validate_coverage(&generator, shrunk, 1)?);

    let config = CascadeValidationConfig {
        trials: 50,
        ..CascadeValidationConfig::default()
    };
    println!("{}\n", validate_cascade(&TwoBranchGenerator::default(), config, 2)?);

    let world = Gridworld::new(GridConfig::trap_rows())?;
    let config = SafeplanValidationConfig {
        trials: 100,
        oracle_rollouts: 200_000,
        ..SafeplanValidationConfig::default()
    };
    println!("{}", validate_safeplan(&world, config, 3)?);
    Ok(())
}
