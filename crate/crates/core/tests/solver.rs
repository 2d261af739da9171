mod common;

use std::f64::consts::PI;

use mfoc::fixed_point::{certify, solve, SolverSettings};
use mfoc::fokker_planck::control_gradients;
use mfoc::grid;
use mfoc::hjb::{hjb_direct_solve, hopf_cole_solve};
use mfoc::runner::cost::evaluate_cost;
use mfoc::{ScalarField, TorusGrid};

#[test]
fn baseline_residuals_decrease_after_the_transient() {
    let spec = common::baseline_spec();
    let out = solve(&spec, SolverSettings::default()).unwrap();
    assert!(out.converged);
    for w in out.log.windows(2).skip(5) {
        assert!(w[1].residual <= w[0].residual, "{} -> {} at k={}", w[0].residual, w[1].residual, w[1].k);
    }
    assert!(out.log.iter().all(|r| r.envelope_ok));
}

#[test]
fn converged_iterate_is_a_fixed_point_of_the_undamped_map() {
    let spec = common::baseline_spec();
    let settings = SolverSettings::default();
    let out = solve(&spec, settings).unwrap();
    let cert = certify(&spec, &out).unwrap();
    assert!(cert.damping_neutrality <= 10.0 * settings.tol, "{}", cert.damping_neutrality);
    assert!(cert.sup_ok && cert.passed);
}

#[test]
fn relaxation_does_not_change_the_limit() {
    let spec = common::baseline_at(32, 256);
    let tight = |theta| SolverSettings { theta, tol: 1e-9, ..SolverSettings::default() };
    let a = solve(&spec, tight(0.5)).unwrap();
    let b = solve(&spec, tight(0.8)).unwrap();
    assert!(a.converged && b.converged);
    let (dv, dg) = a.value.distance(&b.value).unwrap();
    assert!(dv + dg < 1e-7, "{dv} {dg}");
}

fn baseline_cost(steps: usize) -> f64 {
    let spec = common::baseline_at(64, steps);
    let out = solve(&spec, SolverSettings::default()).unwrap();
    let grads = control_gradients(&out.value.frames).unwrap();
    let c = evaluate_cost(&spec, &out.density, &grads).unwrap();
    assert_eq!(c.total, c.running + c.terminal);
    c.total
}

#[test]
fn cost_converges_at_first_order_in_time() {
    let c: Vec<f64> = [256, 512, 1024].into_iter().map(baseline_cost).collect();
    let ratio = (c[1] - c[2]) / (c[0] - c[1]);
    assert!((0.35..=0.65).contains(&ratio), "{c:?}: ratio {ratio}");
}

// The Lie splitting of the forward step biases the drift/diffusion balance
// of the first mode by 4π²·dt/2, about 2% at 512 steps, and the total cost
// is a near-cancellation of running and terminal parts.
#[test]
#[ignore = "first-order splitting moves the baseline cost by ~3% per halving of dt"]
fn cost_is_stable_under_time_refinement() {
    let (coarse, fine) = (baseline_cost(512), baseline_cost(1024));
    let rel = (coarse - fine).abs() / fine.abs();
    assert!(rel <= 1e-3, "{coarse} vs {fine}: {rel:.2e}");
}

#[test]
fn trivial_problems_have_closed_form_costs() {
    let g = TorusGrid::new(1, 32).unwrap();
    let uniform = ScalarField::constant(&g, 1.0);

    let zero = common::flat_spec(32, 0.5, 64, uniform.clone(), 0.0, 0.0);
    let out = solve(&zero, SolverSettings::default()).unwrap();
    let grads = control_gradients(&out.value.frames).unwrap();
    assert_eq!(evaluate_cost(&zero, &out.density, &grads).unwrap().total, 0.0);

    let (c, phi_t) = (0.6, 0.25);
    let flat = common::flat_spec(32, 0.5, 64, uniform, c, phi_t);
    let out = solve(&flat, SolverSettings::default()).unwrap();
    let grads = control_gradients(&out.value.frames).unwrap();
    let cost = evaluate_cost(&flat, &out.density, &grads).unwrap();
    let expected = c * 0.5 + grid::integrate(&flat.phi_terminal);
    assert!((cost.total - expected).abs() < 1e-13, "{} vs {expected}", cost.total);
}

#[test]
fn hopf_cole_and_direct_solver_agree_on_a_smooth_source() {
    let spec = common::baseline_at(64, 512);
    let out = solve(&spec, SolverSettings::default()).unwrap();
    let hc = hopf_cole_solve(&spec.phi_terminal, &out.source, &spec.mesh).unwrap();
    let direct = hjb_direct_solve(&spec.phi_terminal, &out.source, &spec.mesh).unwrap();
    let (dv, _) = hc.distance(&direct).unwrap();
    assert!(dv <= 1e-4, "{dv}");
}

#[test]
fn heat_equation_is_reproduced_from_a_peaked_start() {
    let g = TorusGrid::new(1, 64).unwrap();
    let rho0 = g.sample(|x| 1.0 + 0.9 * (4.0 * PI * x[0]).sin());
    let spec = common::flat_spec(64, 0.05, 100, rho0, 0.0, 0.0);
    let out = solve(&spec, SolverSettings::default()).unwrap();
    let decay = (-16.0 * PI * PI * 0.05f64).exp();
    let exact = g.sample(|x| 1.0 + 0.9 * decay * (4.0 * PI * x[0]).sin());
    assert!(out.density.last().sub(&exact).unwrap().max_abs() < 1e-10);
}
