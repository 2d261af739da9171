//! Perturbs the optimal feedback of the reference problem and reports the
//! cost changes; near a minimiser they are nonnegative and shrink
//! quadratically with the step.

use std::path::Path;

use mfoc::fixed_point::solve;
use mfoc::runner::config::{build_spec, load_config};
use mfoc::runner::cost::{optimality_probe, ProbeSettings};

fn main() -> mfoc::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/baseline.toml");
    let loaded = load_config(&path)?;
    let (spec, _) = build_spec(&loaded.config, &loaded.base_dir)?;
    let out = solve(&spec, loaded.config.solver.settings())?;
    let report = optimality_probe(&spec, &out.value, &ProbeSettings::default())?;

    println!("E = {:.6e}", report.base.total);
    println!("{:>3} {:>11} {:>11} {:>11}", "#", "dE(0.2)", "dE(0.1)", "dE(0.05)");
    for (i, p) in report.perturbations.iter().enumerate() {
        println!("{i:>3} {:>11.3e} {:>11.3e} {:>11.3e}", p.delta[0], p.delta[1], p.delta[2]);
    }
    println!("min dE at 0.1: {:.3e}; slopes decreasing: {}", report.min_delta, report.slopes_decreasing);
    Ok(())
}
