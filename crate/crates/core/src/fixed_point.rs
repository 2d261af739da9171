//! Damped Picard iteration for the coupled system and the checks that
//! certify its output.
//!
//! The map `F` takes a value trajectory `φ`, solves the forward equation
//! with control `∇φ`, assembles the backward coefficients from the result
//! and returns the backward solution `Φ = F(φ)`. Iterates are relaxed as
//! `φ_{k+1} = (1 − θ)φ_k + θ F(φ_k)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fokker_planck::{control_gradients, fp_solve_with_safety, DensityTrajectory};
use crate::grid::{self, ScalarField};
use crate::hjb::{self, assemble_source, hopf_cole_solve_with_safety, SourceAssembly, ValueTrajectory};
use crate::problem::ProblemSpec;

/// Constants of the a priori Lipschitz envelope `‖∇Φ(t)‖∞ ≤ A e^{B(T−t)}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LipschitzBudget {
    pub a: f64,
    pub b: f64,
    /// `C = A e^{BT}`.
    pub c: f64,
    /// Additive constant in `A`, zero unless configured.
    pub c0: f64,
    pub horizon: f64,
    pub grad_phi_terminal: f64,
    pub sup_phi_terminal: f64,
    pub grad_w: f64,
    pub hess_w: f64,
    pub sup_u: f64,
    pub grad_u: f64,
}

impl LipschitzBudget {
    pub fn envelope(&self, t: f64) -> f64 {
        self.a * (self.b * (self.horizon - t)).exp()
    }
}

/// `A = ‖∇φ_T‖ + ‖∇²W‖(T/2 + 2‖φ_T‖ + 2T‖U‖) + T‖∇U‖ + C₀`,
/// `B = ‖∇²W‖(2‖∇W‖ + 1)`.
pub fn compute_budget(spec: &ProblemSpec, c0: f64) -> Result<LipschitzBudget> {
    let t = spec.mesh.horizon();
    let ps = spec.potential_sample();
    let bounds = spec.coupling.bounds(&spec.grid)?;
    let grad_u = bounds.grad_sup.ok_or(Error::MissingEstimate("spatial gradient bound of the coupling"))?;
    let grad_phi_terminal = grid::gradient(&spec.phi_terminal)?.sup_norm();
    let sup_phi_terminal = spec.phi_terminal.max_abs();
    let (grad_w, hess_w) = (ps.grad_norm, ps.hess_norm);
    let a = grad_phi_terminal + hess_w * (0.5 * t + 2.0 * sup_phi_terminal + 2.0 * t * bounds.sup) + t * grad_u + c0;
    let b = hess_w * (2.0 * grad_w + 1.0);
    Ok(LipschitzBudget {
        a,
        b,
        c: a * (b * t).exp(),
        c0,
        horizon: t,
        grad_phi_terminal,
        sup_phi_terminal,
        grad_w,
        hess_w,
        sup_u: bounds.sup,
        grad_u,
    })
}

/// One application of the iteration map.
#[derive(Clone, Debug)]
pub struct FStep {
    pub density: DensityTrajectory,
    pub source: SourceAssembly,
    pub value: ValueTrajectory,
}

pub fn apply_f(spec: &ProblemSpec, phi: &[ScalarField]) -> Result<FStep> {
    let grads = control_gradients(phi)?;
    let density = fp_solve_with_safety(&spec.rho0, spec.grad_w(), &grads, &spec.mesh, spec.cfl_safety)?;
    let source = assemble_source(spec, &density, &grads)?;
    let value = hopf_cole_solve_with_safety(&spec.phi_terminal, &source, &spec.mesh, spec.cfl_safety)?;
    Ok(FStep { density, source, value })
}

/// The initial iterate: `φ_T` at every time.
pub fn initial_iterate(spec: &ProblemSpec) -> Vec<ScalarField> {
    vec![spec.phi_terminal.clone(); spec.mesh.nodes()]
}

#[derive(Clone, Copy, Debug)]
pub struct SolverSettings {
    /// Relaxation `θ ∈ (0, 1]`.
    pub theta: f64,
    pub tol: f64,
    pub max_iterations: usize,
    pub c0: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { theta: 0.5, tol: 1e-6, max_iterations: 200, c0: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `‖Φ_k − Φ_{k−1}‖∞ + max_t ‖∇Φ_k − ∇Φ_{k−1}‖∞`.
    pub residual: f64,
    /// `max_t ‖ρ_k − ρ_{k−1}‖_{L²}`.
    pub density_gap: f64,
    /// `‖Φ_k − φ_k‖∞`, informational.
    pub fixed_point_gap: f64,
    /// `min_t (A e^{B(T−t)} − ‖∇Φ_k(t)‖∞)`.
    pub envelope_margin: f64,
    pub envelope_ok: bool,
}

#[derive(Clone, Debug)]
pub struct FixedPointOutcome {
    pub value: ValueTrajectory,
    pub density: DensityTrajectory,
    pub source: SourceAssembly,
    pub budget: LipschitzBudget,
    /// The iterate `φ_k` whose control produced `density` and `source`.
    pub control: Vec<ScalarField>,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    pub settings: SolverSettings,
}

/// Slack of the discrete envelope check: `10(h + dt) C`.
pub fn envelope_tolerance(spec: &ProblemSpec, budget: &LipschitzBudget) -> f64 {
    10.0 * (spec.grid.h() + spec.mesh.dt()) * budget.c
}

/// `min_k (A e^{B(T−t_k)} − ‖∇Φ(t_k)‖∞)`.
pub fn envelope_margin(value: &ValueTrajectory, budget: &LipschitzBudget) -> f64 {
    value
        .diagnostics
        .iter()
        .map(|d| budget.envelope(d.time) - d.grad_sup)
        .fold(f64::INFINITY, f64::min)
}

pub fn solve(spec: &ProblemSpec, settings: SolverSettings) -> Result<FixedPointOutcome> {
    if !(settings.theta > 0.0 && settings.theta <= 1.0) {
        return Err(Error::InvalidParameter(format!("relaxation {} outside (0, 1]", settings.theta)));
    }
    if !(settings.tol > 0.0) || settings.max_iterations == 0 {
        return Err(Error::InvalidParameter("tolerance and iteration cap must be positive".into()));
    }
    let budget = compute_budget(spec, settings.c0)?;
    let slack = envelope_tolerance(spec, &budget);
    let mut phi = initial_iterate(spec);
    let mut prev_value = phi.clone();
    let mut prev_density: Option<DensityTrajectory> = None;
    let mut log = Vec::new();
    for k in 0..settings.max_iterations {
        let step = apply_f(spec, &phi)?;
        let (dv, dg) = hjb::distance(&step.value.frames, &prev_value)?;
        let residual = dv + dg;
        let density_gap = match &prev_density {
            Some(p) => step.density.distance_linf_l2(p)?,
            None => f64::NAN,
        };
        let fixed_point_gap = hjb::distance(&step.value.frames, &phi)?.0;
        let margin = envelope_margin(&step.value, &budget);
        let record = IterationRecord {
            k,
            residual,
            density_gap,
            fixed_point_gap,
            envelope_margin: margin,
            envelope_ok: margin >= -slack,
        };
        log::info!("iteration {k}: residual {residual:.3e}, fixed-point gap {fixed_point_gap:.3e}");
        log.push(record);
        let converged = residual <= settings.tol;
        if converged || k + 1 == settings.max_iterations {
            if !converged {
                log::warn!("no convergence after {} iterations", settings.max_iterations);
            }
            return Ok(FixedPointOutcome {
                value: step.value,
                density: step.density,
                source: step.source,
                budget,
                control: phi,
                log,
                converged,
                settings,
            });
        }
        phi = phi
            .iter()
            .zip(&step.value.frames)
            .map(|(p, v)| p.zip_map(v, |a, b| (1.0 - settings.theta) * a + settings.theta * b))
            .collect::<Result<_>>()?;
        prev_value = step.value.frames;
        prev_density = Some(step.density);
    }
    unreachable!("loop returns on its last iteration")
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Certification {
    pub envelope_ok: bool,
    pub envelope_margin: f64,
    pub envelope_tolerance: f64,
    pub sup_ok: bool,
    pub sup_value: f64,
    pub sup_bound: f64,
    /// `max_t ‖fp_solve(∇Φ) − ρ‖_{L²}`.
    pub self_consistency: f64,
    pub self_consistency_ok: bool,
    /// `‖F(Φ) − Φ‖` in the residual norm.
    pub damping_neutrality: f64,
    pub damping_neutrality_ok: bool,
    pub mass_drift: f64,
    pub min_density: f64,
    pub gronwall_ratio: f64,
    pub forward_ok: bool,
    pub c0: f64,
    /// Spatial `C^{0,1/2}` quotient of `∇Φ`, informational.
    pub holder_quotient: f64,
    pub passed: bool,
}

pub const HOLDER_EXPONENT: f64 = 0.5;

/// Max over a handful of times and all axis-aligned node pairs of
/// `|∇Φ(x) − ∇Φ(y)| / |x − y|^α`.
pub fn holder_quotient(value: &ValueTrajectory, alpha: f64) -> Result<f64> {
    let nodes = value.frames.len();
    let picks = [0, nodes / 4, nodes / 2, 3 * nodes / 4, nodes - 1];
    let mut worst: f64 = 0.0;
    for &k in &picks {
        let grad = grid::gradient(value.at(k))?;
        let g = grad.grid();
        for i in 0..g.len() {
            for axis in 0..g.dim() {
                for off in 1..=g.n() / 2 {
                    let j = g.shift(i, axis, off as isize);
                    let diff = grad
                        .components()
                        .iter()
                        .map(|c| (c.values()[i] - c.values()[j]).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(diff / (off as f64 * g.h()).powf(alpha));
                }
            }
        }
    }
    Ok(worst)
}

/// Checks a converged pair against the a priori estimates.
pub fn certify(spec: &ProblemSpec, outcome: &FixedPointOutcome) -> Result<Certification> {
    let budget = &outcome.budget;
    let tol = outcome.settings.tol;
    let slack = envelope_tolerance(spec, budget);
    let margin = envelope_margin(&outcome.value, budget);
    let sup_value = outcome.value.sup_norm();

    let step = apply_f(spec, &outcome.value.frames)?;
    let self_consistency = step.density.distance_linf_l2(&outcome.density)?;
    let (dv, dg) = step.value.distance(&outcome.value)?;
    let damping_neutrality = dv + dg;

    let mass_drift = outcome.density.mass_drift();
    let min_density = outcome.density.min_value();
    let gronwall_ratio = outcome.density.gronwall_ratio();
    let forward_ok = mass_drift <= 1e-12 && min_density >= -1e-13 && gronwall_ratio <= 1.0;

    let envelope_ok = margin >= -slack;
    let sup_ok = sup_value <= budget.c;
    let self_consistency_ok = self_consistency <= 10.0 * tol;
    let damping_neutrality_ok = damping_neutrality <= 10.0 * tol;
    Ok(Certification {
        envelope_ok,
        envelope_margin: margin,
        envelope_tolerance: slack,
        sup_ok,
        sup_value,
        sup_bound: budget.c,
        self_consistency,
        self_consistency_ok,
        damping_neutrality,
        damping_neutrality_ok,
        mass_drift,
        min_density,
        gronwall_ratio,
        forward_ok,
        c0: budget.c0,
        holder_quotient: holder_quotient(&outcome.value, HOLDER_EXPONENT)?,
        passed: envelope_ok && sup_ok && self_consistency_ok && damping_neutrality_ok && forward_ok,
    })
}
