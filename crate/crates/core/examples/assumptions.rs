//! Interaction potentials and the standing-assumption report.
//!
//! Radial kernels are mollified over two cells by default. With smoothing
//! switched off the Morse cusp at the origin fails the C^{1,1} check, and a
//! power law with `a < 2` is rejected before sampling.

use std::f64::consts::PI;

use mfoc::problem::{validate_assumptions, Coupling, FourierMode, FourierSeries, Potential, ProblemSpec};
use mfoc::{ScalarField, TimeMesh, TorusGrid};

fn report(name: &str, potential: Potential) {
    let grid = TorusGrid::new(1, 128).unwrap();
    let spec = ProblemSpec::new(
        grid.clone(),
        TimeMesh::new(0.5, 256).unwrap(),
        potential,
        Coupling::constant(0.0),
        grid.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
        ScalarField::zeros(&grid),
    );
    let spec = match spec {
        Ok(s) => s,
        Err(e) => {
            println!("{name}: rejected: {e}");
            return;
        }
    };
    let r = validate_assumptions(&spec);
    println!("{name}: all passed = {}", r.all_passed());
    for c in &r.checks {
        println!("  {} {} {}", c.id, if c.passed { "ok  " } else { "FAIL" }, c.detail);
    }
    for w in &r.warnings {
        println!("  warning: {w}");
    }
}

fn main() {
    let trig = FourierSeries::new(0.0, vec![FourierMode::cos(-1.0 / (4.0 * PI * PI), &[1])]);
    report("trigonometric", Potential::trigonometric(trig));
    report("morse, default smoothing", Potential::morse(1.0, 0.2, 0.5, 0.05));
    report("morse, unsmoothed", Potential::morse(1.0, 0.2, 0.5, 0.05).with_smoothing(0.0));
    report("power law a=4 b=2", Potential::power_law(4.0, 2.0));
    report("power law a=1.5 b=2", Potential::power_law(1.5, 2.0));
}
