//! The Hopf–Cole backward solver against the direct monotone scheme on the
//! converged source of the reference problem, at four resolutions.

use std::f64::consts::PI;

use mfoc::fixed_point::{solve, SolverSettings};
use mfoc::hjb::hjb_direct_solve;
use mfoc::problem::{Coupling, FourierMode, FourierSeries, Potential, ProblemSpec};
use mfoc::{TimeMesh, TorusGrid};

fn reference(n: usize, steps: usize) -> mfoc::Result<ProblemSpec> {
    let g = TorusGrid::new(1, n)?;
    let w = Potential::trigonometric(FourierSeries::new(0.0, vec![FourierMode::cos(-1.0 / (4.0 * PI * PI), &[1])]));
    let v = g.sample(|x| 0.5 * (2.0 * PI * x[0]).cos());
    ProblemSpec::new(
        g.clone(),
        TimeMesh::new(0.5, steps)?,
        w.clone(),
        Coupling::additive_nonlocal(v, w)?,
        g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
        g.sample(|x| (2.0 * PI * x[0]).cos() / (4.0 * PI)),
    )
}

fn main() -> mfoc::Result<()> {
    println!("{:>5} {:>6} {:>11} {:>11} {:>7}", "n", "steps", "value gap", "grad gap", "ratio");
    let mut prev: Option<f64> = None;
    for (n, steps) in [(32, 256), (64, 512), (128, 1024), (256, 2048)] {
        let spec = reference(n, steps)?;
        let out = solve(&spec, SolverSettings::default())?;
        let direct = hjb_direct_solve(&spec.phi_terminal, &out.source, &spec.mesh)?;
        let (dv, dg) = out.value.distance(&direct)?;
        let ratio = prev.map_or(String::new(), |p| format!("{:.3}", dv / p));
        println!("{n:>5} {steps:>6} {dv:>11.3e} {dg:>11.3e} {ratio:>7}");
        prev = Some(dv);
    }
    Ok(())
}
