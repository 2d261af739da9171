#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use mfoc::problem::{Coupling, FourierMode, FourierSeries, Potential, ProblemSpec};
use mfoc::runner::config::{build_spec, load_config};
use mfoc::{ScalarField, TimeMesh, TorusGrid};

pub fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

/// The shipped reference problem, read through the configuration path.
pub fn baseline_spec() -> ProblemSpec {
    let loaded = load_config(&configs_dir().join("baseline.toml")).expect("baseline config loads");
    build_spec(&loaded.config, &loaded.base_dir).expect("baseline spec builds").0
}

/// The reference problem built by hand at another resolution.
pub fn baseline_at(n: usize, steps: usize) -> ProblemSpec {
    let g = TorusGrid::new(1, n).unwrap();
    let w = Potential::trigonometric(FourierSeries::new(0.0, vec![FourierMode::cos(-1.0 / (4.0 * PI * PI), &[1])]));
    let v = g.sample(|x| 0.5 * (2.0 * PI * x[0]).cos());
    ProblemSpec::new(
        g.clone(),
        TimeMesh::new(0.5, steps).unwrap(),
        w.clone(),
        Coupling::additive_nonlocal(v, w).unwrap(),
        g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
        g.sample(|x| (2.0 * PI * x[0]).cos() / (4.0 * PI)),
    )
    .unwrap()
}

/// No interaction, constant coupling `c`, flat terminal data `phi_t`.
pub fn flat_spec(n: usize, horizon: f64, steps: usize, rho0: ScalarField, c: f64, phi_t: f64) -> ProblemSpec {
    let g = TorusGrid::new(rho0.grid().dim(), n).unwrap();
    ProblemSpec::new(
        g.clone(),
        TimeMesh::new(horizon, steps).unwrap(),
        Potential::zero(),
        Coupling::constant(c),
        rho0,
        ScalarField::constant(&g, phi_t),
    )
    .unwrap()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
