//! Forward aggregation–diffusion solver `ρ_t = div(bρ) + Δρ`,
//! `b = ∇W⋆ρ + G`, where `G` is a control field (usually `∇φ`).
//!
//! One step is a conservative first-order upwind transport step followed by
//! the exact heat semigroup. The interaction drift is lagged: within
//! `[t_k, t_{k+1}]` the convolution uses `ρ(t_k)` and the control `G(t_k)`.
//! When `dt` violates the positivity bound the step is split into `2^j`
//! equal substeps with the drift held fixed.

use crate::error::{check_finite, Error, Result};
use crate::grid::{self, ScalarField, TimeMesh, VectorField};

/// Largest automatic refinement of one time step.
pub const MAX_SUBSTEPS: usize = 1 << 10;

/// Undershoot below which a step is treated as a loss of positivity.
pub const NEGATIVITY_LIMIT: f64 = -1e-13;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FpDiagnostics {
    pub time: f64,
    pub mass: f64,
    pub min: f64,
    pub l2: f64,
    /// `‖b(t_k)‖∞` of the drift used from this node on.
    pub drift_sup: f64,
}

#[derive(Clone, Debug)]
pub struct DensityTrajectory {
    pub mesh: TimeMesh,
    pub frames: Vec<ScalarField>,
    pub diagnostics: Vec<FpDiagnostics>,
    /// Substeps used on each interval.
    pub substeps: Vec<usize>,
}

impl DensityTrajectory {
    /// Rebuilds a trajectory from stored frames, recomputing diagnostics with
    /// the drift `∇W⋆ρ + G`.
    pub fn from_frames(
        mesh: TimeMesh,
        frames: Vec<ScalarField>,
        grad_w: &VectorField,
        control: &[VectorField],
    ) -> Result<Self> {
        if frames.len() != mesh.nodes() || control.len() != mesh.nodes() {
            return Err(Error::MeshMismatch(format!("{} frames for {} mesh nodes", frames.len(), mesh.nodes())));
        }
        let diagnostics = frames
            .iter()
            .zip(control)
            .enumerate()
            .map(|(k, (r, c))| Ok(diagnostics(mesh.time(k), r, drift(grad_w, r, c)?.sup_norm())))
            .collect::<Result<_>>()?;
        Ok(Self { mesh, frames, diagnostics, substeps: vec![0; mesh.steps()] })
    }

    pub fn at(&self, k: usize) -> &ScalarField {
        &self.frames[k]
    }

    pub fn last(&self) -> &ScalarField {
        self.frames.last().expect("trajectory is never empty")
    }

    /// `max_k |∫ρ(t_k) − ∫ρ₀|`.
    pub fn mass_drift(&self) -> f64 {
        let m0 = self.diagnostics[0].mass;
        self.diagnostics.iter().map(|d| (d.mass - m0).abs()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.min).fold(f64::INFINITY, f64::min)
    }

    /// `max_k ‖ρ(t_k)‖_{L²}`.
    pub fn max_l2(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.l2).fold(0.0, f64::max)
    }

    /// `max_k ‖ρ(t_k) − other(t_k)‖_{L²}`.
    pub fn distance_linf_l2(&self, other: &DensityTrajectory) -> Result<f64> {
        self.mesh.check(&other.mesh)?;
        let mut worst: f64 = 0.0;
        for (a, b) in self.frames.iter().zip(&other.frames) {
            worst = worst.max(a.sub(b)?.l2_norm());
        }
        Ok(worst)
    }

    /// Largest ratio `‖ρ(t)‖² / (‖ρ₀‖² e^{C_G t})` with `C_G = max_t ‖b‖∞²`;
    /// the energy estimate keeps it at most one.
    pub fn gronwall_ratio(&self) -> f64 {
        let c = self.diagnostics.iter().map(|d| d.drift_sup * d.drift_sup).fold(0.0, f64::max);
        let l0 = self.diagnostics[0].l2.powi(2);
        self.diagnostics
            .iter()
            .map(|d| d.l2.powi(2) / (l0 * (c * d.time).exp()))
            .fold(0.0, f64::max)
    }
}

fn diagnostics(time: f64, rho: &ScalarField, drift_sup: f64) -> FpDiagnostics {
    FpDiagnostics { time, mass: grid::integrate(rho), min: rho.min(), l2: rho.l2_norm(), drift_sup }
}

/// `2·d·dt·‖b‖∞/h`; the upwind step is positivity preserving when this is at most one.
pub fn cfl_number(drift: &VectorField, dt: f64) -> f64 {
    let g = drift.grid();
    2.0 * g.dim() as f64 * dt * drift.sup_norm() / g.h()
}

/// One step of `ρ_t = div(bρ) + Δρ` with the drift frozen.
pub fn fp_step(rho: &ScalarField, drift: &VectorField, dt: f64) -> Result<ScalarField> {
    if rho.grid() != drift.grid() {
        return Err(Error::GridMismatch("density and drift".into()));
    }
    check_finite("density", rho.values())?;
    for c in drift.components() {
        check_finite("drift", c.values())?;
    }
    let number = cfl_number(drift, dt);
    if number > 1.0 {
        let g = drift.grid();
        return Err(Error::Cfl { number, admissible_dt: g.h() / (2.0 * g.dim() as f64 * drift.sup_norm()) });
    }
    Ok(grid::heat_semigroup(&transport(rho, drift, dt), dt))
}

/// Upwind flux-form step of `ρ_t + div(vρ) = 0` with `v = −b`.
fn transport(rho: &ScalarField, drift: &VectorField, dt: f64) -> ScalarField {
    let g = rho.grid();
    let r = rho.values();
    let lambda = dt / g.h();
    let mut out = r.to_vec();
    let mut flux = vec![0.0; g.len()];
    for axis in 0..g.dim() {
        let b = drift.component(axis).values();
        // flux through the face between node i and its +1 neighbour
        for (i, f) in flux.iter_mut().enumerate() {
            let j = g.shift(i, axis, 1);
            let v = -0.5 * (b[i] + b[j]);
            *f = v.max(0.0) * r[i] + v.min(0.0) * r[j];
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o -= lambda * (flux[i] - flux[g.shift(i, axis, -1)]);
        }
    }
    ScalarField::new(g, out).expect("same grid")
}

/// Smallest power-of-two split of `dt` with CFL number at most `safety`.
fn substeps_for(drift: &VectorField, dt: f64, time: f64, safety: f64) -> Result<usize> {
    let mut m = 1usize;
    while cfl_number(drift, dt / m as f64) > safety {
        m *= 2;
        if m > MAX_SUBSTEPS {
            return Err(Error::CflRefinement { time, substeps: MAX_SUBSTEPS });
        }
    }
    Ok(m)
}

/// Gradients of a value trajectory, one per mesh node.
pub fn control_gradients(phi: &[ScalarField]) -> Result<Vec<VectorField>> {
    phi.iter().map(grid::gradient).collect()
}

fn drift(
    grad_w: &VectorField,
    interacting: &ScalarField,
    control: &VectorField,
) -> Result<VectorField> {
    grid::convolve_vector(grad_w, interacting)?.add(control)
}

fn check_inputs(rho0: &ScalarField, grad_w: &VectorField, control: &[VectorField], mesh: &TimeMesh) -> Result<()> {
    if control.len() != mesh.nodes() {
        return Err(Error::MeshMismatch(format!(
            "{} control frames for {} mesh nodes",
            control.len(),
            mesh.nodes()
        )));
    }
    if rho0.grid() != grad_w.grid() || control.iter().any(|c| c.grid() != rho0.grid()) {
        return Err(Error::GridMismatch("forward solver inputs".into()));
    }
    check_finite("initial density", rho0.values())
}

fn run(
    rho0: &ScalarField,
    grad_w: &VectorField,
    control: &[VectorField],
    mesh: &TimeMesh,
    frozen: Option<&DensityTrajectory>,
    safety: f64,
) -> Result<DensityTrajectory> {
    check_inputs(rho0, grad_w, control, mesh)?;
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidParameter(format!("CFL safety factor {safety} outside (0, 1]")));
    }
    if let Some(f) = frozen {
        mesh.check(&f.mesh)?;
    }
    let dt = mesh.dt();
    let mut frames = Vec::with_capacity(mesh.nodes());
    let mut diags = Vec::with_capacity(mesh.nodes());
    let mut substeps = Vec::with_capacity(mesh.steps());
    let mut rho = rho0.clone();
    for k in 0..mesh.steps() {
        let t = mesh.time(k);
        let interacting = frozen.map_or(&rho, |f| f.at(k));
        let b = drift(grad_w, interacting, &control[k])?;
        diags.push(diagnostics(t, &rho, b.sup_norm()));
        let m = substeps_for(&b, dt, t, safety)?;
        let mut next = rho.clone();
        for _ in 0..m {
            next = fp_step(&next, &b, dt / m as f64)?;
        }
        let min = next.min();
        if min < NEGATIVITY_LIMIT {
            return Err(Error::NegativeDensity { min, time: mesh.time(k + 1) });
        }
        frames.push(std::mem::replace(&mut rho, next));
        substeps.push(m);
    }
    let last_interacting = frozen.map_or(&rho, |f| f.last());
    let b = drift(grad_w, last_interacting, &control[mesh.steps()])?;
    diags.push(diagnostics(mesh.horizon(), &rho, b.sup_norm()));
    frames.push(rho);
    Ok(DensityTrajectory { mesh: *mesh, frames, diagnostics: diags, substeps })
}

/// Self-consistent forward solve with control field `G(t_k)` per node.
pub fn fp_solve(
    rho0: &ScalarField,
    grad_w: &VectorField,
    control: &[VectorField],
    mesh: &TimeMesh,
) -> Result<DensityTrajectory> {
    run(rho0, grad_w, control, mesh, None, 1.0)
}

/// [`fp_solve`] with substeps chosen so the CFL number stays below `safety ∈ (0, 1]`.
pub fn fp_solve_with_safety(
    rho0: &ScalarField,
    grad_w: &VectorField,
    control: &[VectorField],
    mesh: &TimeMesh,
    safety: f64,
) -> Result<DensityTrajectory> {
    run(rho0, grad_w, control, mesh, None, safety)
}

/// Forward solve with the interaction computed from a frozen trajectory `ρ̄`:
/// `ρ_t = div((∇W⋆ρ̄ + G)ρ) + Δρ`. Given the output of [`fp_solve`] with the
/// same control, it reproduces that trajectory exactly.
pub fn t_map(
    rho0: &ScalarField,
    grad_w: &VectorField,
    control: &[VectorField],
    frozen: &DensityTrajectory,
    mesh: &TimeMesh,
) -> Result<DensityTrajectory> {
    run(rho0, grad_w, control, mesh, Some(frozen), 1.0)
}

/// [`t_map`] with the substep rule of [`fp_solve_with_safety`].
pub fn t_map_with_safety(
    rho0: &ScalarField,
    grad_w: &VectorField,
    control: &[VectorField],
    frozen: &DensityTrajectory,
    mesh: &TimeMesh,
    safety: f64,
) -> Result<DensityTrajectory> {
    run(rho0, grad_w, control, mesh, Some(frozen), safety)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    fn zero_controls(g: &TorusGrid, mesh: &TimeMesh) -> Vec<VectorField> {
        vec![VectorField::zeros(g); mesh.nodes()]
    }

    #[test]
    fn pure_heat_decays_first_mode_exactly() {
        let g = TorusGrid::new(1, 32).unwrap();
        let mesh = TimeMesh::new(0.1, 10).unwrap();
        let rho0 = g.sample(|x| 1.0 + 0.3 * (TWO_PI * x[0]).cos());
        let w = VectorField::zeros(&g);
        let traj = fp_solve(&rho0, &w, &zero_controls(&g, &mesh), &mesh).unwrap();
        let decay = (-4.0 * PI * PI * 0.1f64).exp();
        let exact = g.sample(|x| 1.0 + 0.3 * decay * (TWO_PI * x[0]).cos());
        assert!(traj.last().sub(&exact).unwrap().max_abs() < 1e-13);
        assert!(traj.mass_drift() < 1e-14);
    }

    #[test]
    fn cfl_violation_reports_admissible_step() {
        let g = TorusGrid::new(1, 16).unwrap();
        let rho = ScalarField::constant(&g, 1.0);
        let b = VectorField::constant(&g, &[10.0]);
        match fp_step(&rho, &b, 0.01).unwrap_err() {
            Error::Cfl { number, admissible_dt } => {
                assert!(number > 1.0);
                assert!((admissible_dt - g.h() / 20.0).abs() < 1e-15);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn uniform_drift_translates_density() {
        // ρ_t = div(bρ) with constant b moves mass with velocity −b
        let g = TorusGrid::new(1, 128).unwrap();
        let mesh = TimeMesh::new(0.05, 400).unwrap();
        let rho0 = g.sample(|x| 1.0 + 0.5 * (TWO_PI * x[0]).cos());
        let control = vec![VectorField::constant(&g, &[1.0]); mesh.nodes()];
        let traj = fp_solve(&rho0, &VectorField::zeros(&g), &control, &mesh).unwrap();
        let decay = (-4.0 * PI * PI * 0.05f64).exp();
        let exact = g.sample(|x| 1.0 + 0.5 * decay * (TWO_PI * (x[0] + 0.05)).cos());
        assert!(traj.last().sub(&exact).unwrap().max_abs() < 0.02);
    }

    #[test]
    fn refinement_kicks_in_and_t_map_matches() {
        let g = TorusGrid::new(1, 32).unwrap();
        let mesh = TimeMesh::new(0.2, 4).unwrap();
        let rho0 = g.sample(|x| 1.0 + 0.5 * (TWO_PI * x[0]).sin());
        let grad_w = VectorField::new(vec![g.sample(|x| (TWO_PI * x[0]).sin() / TWO_PI)]).unwrap();
        let control = vec![VectorField::new(vec![g.sample(|x| 0.4 * (TWO_PI * x[0]).cos())]).unwrap(); mesh.nodes()];
        let traj = fp_solve(&rho0, &grad_w, &control, &mesh).unwrap();
        assert!(traj.substeps.iter().all(|&m| m > 1));
        let again = t_map(&rho0, &grad_w, &control, &traj, &mesh).unwrap();
        for (a, b) in traj.frames.iter().zip(&again.frames) {
            assert_eq!(a, b);
        }
        assert!(traj.gronwall_ratio() <= 1.0);
    }

    #[test]
    fn refinement_floor_is_an_error() {
        let g = TorusGrid::new(1, 64).unwrap();
        let mesh = TimeMesh::new(1.0, 1).unwrap();
        let control = vec![VectorField::constant(&g, &[1e4]); mesh.nodes()];
        let err = fp_solve(&ScalarField::constant(&g, 1.0), &VectorField::zeros(&g), &control, &mesh).unwrap_err();
        assert!(matches!(err, Error::CflRefinement { .. }));
    }

    #[test]
    fn mismatched_controls_rejected() {
        let g = TorusGrid::new(1, 16).unwrap();
        let mesh = TimeMesh::new(0.1, 4).unwrap();
        let err = fp_solve(&ScalarField::constant(&g, 1.0), &VectorField::zeros(&g), &[], &mesh).unwrap_err();
        assert!(matches!(err, Error::MeshMismatch(_)));
    }
}
