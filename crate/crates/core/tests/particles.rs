mod common;

use std::f64::consts::PI;

use mfoc::fixed_point::{solve, SolverSettings};
use mfoc::hjb::ValueTrajectory;
use mfoc::particles::{
    simulate_adjoint, simulate_mkv, verify_value_identity, wasserstein1, AdjointFlow, Measure, ParticleCloud,
};
use mfoc::problem::{Coupling, FourierMode, FourierSeries, Potential, ProblemSpec};
use mfoc::{ScalarField, TimeMesh, TorusGrid};
use proptest::prelude::*;

fn free_spec(horizon: f64, steps: usize, potential: Potential) -> ProblemSpec {
    let g = TorusGrid::new(1, 32).unwrap();
    ProblemSpec::new(
        g.clone(),
        TimeMesh::new(horizon, steps).unwrap(),
        potential,
        Coupling::constant(0.0),
        ScalarField::constant(&g, 1.0),
        ScalarField::zeros(&g),
    )
    .unwrap()
}

fn zero_value(spec: &ProblemSpec) -> ValueTrajectory {
    ValueTrajectory::from_frames(spec.mesh, vec![ScalarField::zeros(&spec.grid); spec.mesh.nodes()]).unwrap()
}

fn torus_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - d.round()
}

#[test]
fn free_particles_diffuse_with_variance_two_t() {
    let spec = free_spec(0.005, 50, Potential::zero());
    let n = 10_000;
    let frames = simulate_mkv(&spec, &zero_value(&spec), n, 1).unwrap();
    for k in [10, 25, 50] {
        let t = spec.mesh.time(k);
        let disp: Vec<f64> =
            (0..n).map(|i| torus_diff(frames[k].position(i)[0], frames[0].position(i)[0])).collect();
        let mean = disp.iter().sum::<f64>() / n as f64;
        let var = disp.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let rel = (var - 2.0 * t).abs() / (2.0 * t);
        assert!(rel <= 5.0 / (n as f64).sqrt(), "t={t}: variance {var}, relative error {rel}");
    }
}

#[test]
fn single_particle_feels_no_self_interaction() {
    // an odd kernel has ∇W(0) ≠ 0, so any self-interaction would show
    let odd = Potential::trigonometric(FourierSeries::new(0.0, vec![FourierMode::sin(0.3, &[1])]));
    let with = free_spec(0.2, 40, odd);
    let without = free_spec(0.2, 40, Potential::zero());
    let a = simulate_mkv(&with, &zero_value(&with), 1, 5).unwrap();
    let b = simulate_mkv(&without, &zero_value(&without), 1, 5).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.positions(), y.positions());
    }
}

#[test]
fn free_adjoint_paths_stay_centred() {
    let spec = free_spec(0.01, 20, Potential::zero());
    let source = mfoc::hjb::assemble_source(
        &spec,
        &mfoc::fokker_planck::DensityTrajectory::from_frames(
            spec.mesh,
            vec![spec.rho0.clone(); spec.mesh.nodes()],
            spec.grad_w(),
            &vec![mfoc::VectorField::zeros(&spec.grid); spec.mesh.nodes()],
        )
        .unwrap(),
        &vec![mfoc::VectorField::zeros(&spec.grid); spec.mesh.nodes()],
    )
    .unwrap();
    let x0 = 0.2;
    let n = 10_000;
    for flow in [AdjointFlow::Zeta, AdjointFlow::Eta] {
        let p = simulate_adjoint(&spec, &zero_value(&spec), &source, flow, &[x0], 0.0, n, 9).unwrap();
        let disp: Vec<f64> = (0..n).map(|i| torus_diff(p.final_cloud.position(i)[0], x0)).collect();
        let mean = disp.iter().sum::<f64>() / n as f64;
        let sd = (2.0 * 0.01f64).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() <= 4.0 * sd, "{flow:?}: mean displacement {mean}");
    }
}

#[test]
fn simulations_are_reproducible_per_seed() {
    let spec = common::baseline_at(32, 64);
    let value = zero_value(&spec);
    let a = simulate_mkv(&spec, &value, 300, 42).unwrap();
    let b = simulate_mkv(&spec, &value, 300, 42).unwrap();
    let c = simulate_mkv(&spec, &value, 300, 43).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.positions() == y.positions()));
    assert_ne!(a.last().unwrap().positions(), c.last().unwrap().positions());
}

#[test]
fn constant_coupling_value_grows_backward_in_time() {
    let c = 0.8;
    let g = TorusGrid::new(1, 32).unwrap();
    let spec = common::flat_spec(32, 0.5, 100, ScalarField::constant(&g, 1.0), c, 0.0);
    let out = solve(&spec, SolverSettings::default()).unwrap();
    for t0 in [0.0, 0.2, 0.4] {
        let r = verify_value_identity(&spec, &out.value, &out.source, AdjointFlow::Zeta, &[0.1], t0, 200, 0).unwrap();
        let expected = c * (0.5 - spec.mesh.time(spec.mesh.index_of(t0)));
        assert!((r.direct - expected).abs() < 1e-12, "direct {} vs {expected}", r.direct);
        assert!(r.residual.abs() < 1e-12);
    }
}

#[test]
fn mean_field_distance_shrinks_with_more_particles() {
    let spec = common::baseline_at(64, 128);
    let out = solve(&spec, SolverSettings::default()).unwrap();
    let d = |n: usize| -> f64 {
        let ds: Vec<f64> = (0..5)
            .map(|s| {
                let frames = simulate_mkv(&spec, &out.value, n, s).unwrap();
                wasserstein1(Measure::Cloud(frames.last().unwrap()), Measure::Density(out.density.last()))
                    .unwrap()
                    .distance
            })
            .collect();
        common::median(&ds)
    };
    assert!(d(2_000) < d(100));
}

#[test]
fn shifted_uniform_density_is_free_to_transport() {
    let g = TorusGrid::new(1, 64).unwrap();
    let flat = ScalarField::constant(&g, 1.0);
    let bump = g.sample(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos());
    let w = wasserstein1(Measure::Density(&flat), Measure::Density(&flat)).unwrap();
    assert_eq!(w.distance, 0.0);
    assert!(wasserstein1(Measure::Density(&flat), Measure::Density(&bump)).unwrap().distance > 0.0);
}

#[test]
fn planar_distance_is_flagged_as_estimate() {
    let a = ParticleCloud::new(2, vec![0.0, 0.0, 0.1, 0.1]).unwrap();
    let b = ParticleCloud::new(2, vec![0.2, 0.0, 0.3, 0.1]).unwrap();
    let w = wasserstein1(Measure::Cloud(&a), Measure::Cloud(&b)).unwrap();
    assert!(!w.exact);
    assert!((w.distance - 0.2).abs() < 1e-12);
}

fn cloud() -> impl Strategy<Value = ParticleCloud> {
    prop::collection::vec(-0.5f64..0.5, 1..60).prop_map(|xs| ParticleCloud::new(1, xs).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circle_distance_is_a_metric(a in cloud(), b in cloud(), c in cloud()) {
        let d = |x: &ParticleCloud, y: &ParticleCloud| wasserstein1(Measure::Cloud(x), Measure::Cloud(y)).unwrap().distance;
        prop_assert_eq!(d(&a, &a), 0.0);
        prop_assert_eq!(d(&a, &b).to_bits(), d(&b, &a).to_bits());
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-10);
        // no two points on the circle are further apart than 1/2
        prop_assert!(d(&a, &b) <= 0.5);
    }

    #[test]
    fn rotating_a_single_atom_costs_its_arc(x in -0.5f64..0.5, s in -0.49f64..0.49) {
        let y = x + s;
        let y = y - (y + 0.5).div_euclid(1.0);
        let a = ParticleCloud::new(1, vec![x]).unwrap();
        let b = ParticleCloud::new(1, vec![y]).unwrap();
        let w = wasserstein1(Measure::Cloud(&a), Measure::Cloud(&b)).unwrap().distance;
        prop_assert!((w - s.abs()).abs() < 1e-12);
    }
}
