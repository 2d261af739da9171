//! Cost functional `E = ∫∫[L(x, ρ) + |G|²/2]ρ + ∫φ_T ρ(T)` of a density
//! driven by the control `G` (the feedback `F = −G`), and a variational
//! probe of its first-order optimality.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fokker_planck::{fp_solve_with_safety, DensityTrajectory};
use crate::grid::{self, ScalarField, VectorField};
use crate::hjb::ValueTrajectory;
use crate::problem::{FourierMode, FourierSeries, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostReport {
    /// `∫∫ L ρ`.
    pub running_cost: f64,
    /// `∫∫ |G|²/2 ρ`.
    pub kinetic: f64,
    /// `running_cost + kinetic`.
    pub running: f64,
    /// `∫ φ_T ρ(T)`.
    pub terminal: f64,
    pub total: f64,
    /// `false` when the coupling has no running cost and `L` was omitted.
    pub running_cost_included: bool,
}

/// Trapezoid in time, node sums in space.
pub fn evaluate_cost(spec: &ProblemSpec, density: &DensityTrajectory, control: &[VectorField]) -> Result<CostReport> {
    density.mesh.check(&spec.mesh)?;
    if control.len() != density.frames.len() {
        return Err(Error::MeshMismatch("control and density frame counts differ".into()));
    }
    let running_law = spec.coupling.running_cost();
    if running_law.is_none() {
        log::warn!("coupling has no running cost; cost evaluated without L");
    }
    let dt = spec.mesh.dt();
    let last = density.frames.len() - 1;
    let (mut running_cost, mut kinetic) = (0.0, 0.0);
    for (k, (rho, g)) in density.frames.iter().zip(control).enumerate() {
        let w = if k == 0 || k == last { 0.5 * dt } else { dt };
        if let Some(l) = &running_law {
            running_cost += w * grid::integrate(&l.evaluate(rho)?.mul(rho)?);
        }
        let speed = g.components().iter().fold(ScalarField::zeros(rho.grid()), |acc, c| {
            acc.add(&c.mul(c).expect("same grid")).expect("same grid")
        });
        kinetic += w * 0.5 * grid::integrate(&speed.mul(rho)?);
    }
    let terminal = grid::integrate(&spec.phi_terminal.mul(density.last())?);
    let running = running_cost + kinetic;
    Ok(CostReport {
        running_cost,
        kinetic,
        running,
        terminal,
        total: running + terminal,
        running_cost_included: running_law.is_some(),
    })
}

/// Cost of the feedback `G = ∇Φ + δG`, re-solving the forward equation.
pub fn cost_of_control(spec: &ProblemSpec, control: &[VectorField]) -> Result<(CostReport, DensityTrajectory)> {
    let density = fp_solve_with_safety(&spec.rho0, spec.grad_w(), control, &spec.mesh, spec.cfl_safety)?;
    Ok((evaluate_cost(spec, &density, control)?, density))
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeSettings {
    pub perturbations: usize,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Threshold on `ΔE` at the reference step.
    pub min_delta: f64,
    pub reference_epsilon: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self { perturbations: 10, epsilons: vec![0.2, 0.1, 0.05], seed: 0, min_delta: -5e-3, reference_epsilon: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Perturbation {
    /// `ψ` with `δG = ∇ψ`, given by `(amplitude, wave, phase)`.
    pub modes: Vec<(f64, Vec<i32>, f64)>,
    /// `ΔE` for each probe step.
    pub delta: Vec<f64>,
    /// `ΔE/ε` for each probe step.
    pub slope: Vec<f64>,
    /// Slopes shrink as `ε` decreases.
    pub slope_decreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeReport {
    pub settings: ProbeSettings,
    pub base: CostReport,
    pub perturbations: Vec<Perturbation>,
    /// `min ΔE` at the reference step.
    pub min_delta: f64,
    pub stationary: bool,
    pub slopes_decreasing: bool,
    pub passed: bool,
}

/// Random smooth potential with three low modes; its gradient is `O(1)`.
fn random_potential<R: Rng>(dim: usize, rng: &mut R) -> FourierSeries {
    let mut modes = Vec::with_capacity(3);
    while modes.len() < 3 {
        let wave: Vec<i32> = (0..dim).map(|_| rng.random_range(-2..=2)).collect();
        let k = wave.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if k == 0.0 {
            continue;
        }
        let amplitude = rng.random_range(-1.0..1.0) / (2.0 * PI * k);
        modes.push(FourierMode { amplitude, wave, phase: rng.random_range(0.0..2.0 * PI) });
    }
    FourierSeries::new(0.0, modes)
}

/// Perturbs the optimal feedback by `ε∇ψ` for random low-mode `ψ` and
/// records the cost change for each `ε`.
pub fn optimality_probe(spec: &ProblemSpec, value: &ValueTrajectory, settings: &ProbeSettings) -> Result<ProbeReport> {
    let grads = value.gradients()?;
    let (base, _) = cost_of_control(spec, &grads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut perturbations = Vec::with_capacity(settings.perturbations);
    for _ in 0..settings.perturbations {
        let psi = random_potential(spec.grid.dim(), &mut rng);
        let dg = grid::gradient(&psi.sample(&spec.grid))?;
        let mut delta = Vec::with_capacity(settings.epsilons.len());
        for &eps in &settings.epsilons {
            let control: Vec<VectorField> =
                grads.iter().map(|g| g.add(&dg.scale(eps))).collect::<Result<_>>()?;
            delta.push(cost_of_control(spec, &control)?.0.total - base.total);
        }
        let slope: Vec<f64> = delta.iter().zip(&settings.epsilons).map(|(d, e)| d / e).collect();
        // epsilons are listed from large to small
        let slope_decreasing = slope.windows(2).all(|w| w[1] < w[0]);
        perturbations.push(Perturbation {
            modes: psi.modes.iter().map(|m| (m.amplitude, m.wave.clone(), m.phase)).collect(),
            delta,
            slope,
            slope_decreasing,
        });
    }
    let reference = settings.epsilons.iter().position(|&e| e == settings.reference_epsilon);
    let min_delta = match reference {
        Some(i) => perturbations.iter().map(|p| p.delta[i]).fold(f64::INFINITY, f64::min),
        None => f64::NAN,
    };
    let stationary = min_delta >= settings.min_delta;
    let slopes_decreasing = perturbations.iter().all(|p| p.slope_decreasing);
    Ok(ProbeReport {
        settings: settings.clone(),
        base,
        perturbations,
        min_delta,
        stationary,
        slopes_decreasing,
        passed: stationary && slopes_decreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{TimeMesh, TorusGrid};
    use crate::problem::{Coupling, Potential};

    fn flat_spec(c: f64, phi_t: f64) -> ProblemSpec {
        let g = TorusGrid::new(1, 16).unwrap();
        ProblemSpec::new(
            g.clone(),
            TimeMesh::new(0.4, 16).unwrap(),
            Potential::zero(),
            Coupling::constant(c),
            ScalarField::constant(&g, 1.0),
            ScalarField::constant(&g, phi_t),
        )
        .unwrap()
    }

    #[test]
    fn zero_problem_costs_nothing() {
        let spec = flat_spec(0.0, 0.0);
        let zero = vec![VectorField::zeros(&spec.grid); spec.mesh.nodes()];
        let (c, _) = cost_of_control(&spec, &zero).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn uniform_problem_cost_is_ct_plus_terminal() {
        let spec = flat_spec(0.7, 0.3);
        let zero = vec![VectorField::zeros(&spec.grid); spec.mesh.nodes()];
        let (c, _) = cost_of_control(&spec, &zero).unwrap();
        assert!((c.running - 0.7 * 0.4).abs() < 1e-14);
        assert!((c.terminal - 0.3).abs() < 1e-14);
        assert_eq!(c.total, c.running + c.terminal);
    }
}
