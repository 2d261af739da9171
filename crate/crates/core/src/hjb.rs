//! Backward Hamilton–Jacobi–Bellman solver
//!
//! ```text
//! -Φ_t + |∇Φ|²/2 + b·∇Φ = ΔΦ + f,   Φ(T) = φ_T,
//! b = ∇W⋆ρ,   f = U(x, ρ) − ∇W⋆(ρ∇φ)
//! ```
//!
//! with `ρ` and the previous iterate `φ` frozen. The production solver uses
//! the Hopf–Cole variable `v = e^{−Φ/2}`, which turns the equation into the
//! linear problem `v_s = Δv − b·∇v − (f/2)v` in reversed time `s = T − t`,
//! split into upwind advection, exact reaction and the exact heat semigroup.
//! [`hjb_direct_solve`] is a monotone Godunov scheme on `Φ` itself and only
//! serves as an independent check.

use crate::error::{check_finite, Error, Result};
use crate::fokker_planck::{DensityTrajectory, MAX_SUBSTEPS};
use crate::grid::{self, ScalarField, TimeMesh, VectorField};
use crate::problem::ProblemSpec;

/// Frozen coefficients of the backward equation, one entry per mesh node.
#[derive(Clone, Debug)]
pub struct SourceAssembly {
    pub mesh: TimeMesh,
    /// `b = ∇W⋆ρ`.
    pub interaction: Vec<VectorField>,
    /// `U(x, ρ)`.
    pub coupling: Vec<ScalarField>,
    /// `g = ∇W⋆(ρ∇φ)`.
    pub nonlocal: Vec<ScalarField>,
    /// `f = U − g`.
    pub source: Vec<ScalarField>,
}

/// Builds the coefficients from a density trajectory and the gradients of
/// the previous value iterate.
pub fn assemble_source(
    spec: &ProblemSpec,
    rho: &DensityTrajectory,
    grad_phi_prev: &[VectorField],
) -> Result<SourceAssembly> {
    rho.mesh.check(&spec.mesh)?;
    if grad_phi_prev.len() != rho.frames.len() {
        return Err(Error::MeshMismatch(format!(
            "{} control frames for {} density frames",
            grad_phi_prev.len(),
            rho.frames.len()
        )));
    }
    let grad_w = spec.grad_w();
    let n = rho.frames.len();
    let (mut interaction, mut coupling, mut nonlocal, mut source) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for (r, gp) in rho.frames.iter().zip(grad_phi_prev) {
        let b = grid::convolve_vector(grad_w, r)?;
        let u = spec.coupling.evaluate(r)?;
        let g = grid::convolve_dot(grad_w, &gp.scale_by(r)?)?;
        source.push(u.sub(&g)?);
        interaction.push(b);
        coupling.push(u);
        nonlocal.push(g);
    }
    Ok(SourceAssembly { mesh: rho.mesh, interaction, coupling, nonlocal, source })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HjbDiagnostics {
    pub time: f64,
    pub sup: f64,
    pub grad_sup: f64,
    /// Minimum of the Hopf–Cole variable (`NaN` for the direct scheme).
    pub min_v: f64,
}

#[derive(Clone, Debug)]
pub struct ValueTrajectory {
    pub mesh: TimeMesh,
    pub frames: Vec<ScalarField>,
    pub diagnostics: Vec<HjbDiagnostics>,
    /// Substeps used on each backward interval, indexed by the earlier node.
    pub substeps: Vec<usize>,
}

impl ValueTrajectory {
    /// Wraps stored frames; the Hopf–Cole minimum is not recoverable and is `NaN`.
    pub fn from_frames(mesh: TimeMesh, frames: Vec<ScalarField>) -> Result<Self> {
        if frames.len() != mesh.nodes() {
            return Err(Error::MeshMismatch(format!("{} frames for {} mesh nodes", frames.len(), mesh.nodes())));
        }
        let diagnostics = frames
            .iter()
            .enumerate()
            .map(|(k, f)| value_diagnostics(mesh.time(k), f, f64::NAN))
            .collect::<Result<_>>()?;
        Ok(Self { mesh, frames, diagnostics, substeps: vec![0; mesh.steps()] })
    }

    pub fn at(&self, k: usize) -> &ScalarField {
        &self.frames[k]
    }

    pub fn gradients(&self) -> Result<Vec<VectorField>> {
        self.frames.iter().map(grid::gradient).collect()
    }

    /// `max_t ‖Φ(t)‖∞`.
    pub fn sup_norm(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.sup).fold(0.0, f64::max)
    }

    /// `t ↦ ‖∇Φ(t)‖∞` on the mesh.
    pub fn lipschitz_profile(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.grad_sup).collect()
    }

    /// `(max_t ‖Φ − Ψ‖∞, max_t ‖∇Φ − ∇Ψ‖∞)`.
    pub fn distance(&self, other: &ValueTrajectory) -> Result<(f64, f64)> {
        distance(&self.frames, &other.frames)
    }
}

/// `(max_t ‖a − b‖∞, max_t ‖∇a − ∇b‖∞)` over two trajectories.
pub fn distance(a: &[ScalarField], b: &[ScalarField]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::MeshMismatch(format!("{} vs {} frames", a.len(), b.len())));
    }
    let (mut value, mut grad): (f64, f64) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let diff = x.sub(y)?;
        value = value.max(diff.max_abs());
        grad = grad.max(grid::gradient(&diff)?.sup_norm());
    }
    Ok((value, grad))
}

fn check_source(phi_terminal: &ScalarField, source: &SourceAssembly, mesh: &TimeMesh) -> Result<()> {
    source.mesh.check(mesh)?;
    check_finite("terminal datum", phi_terminal.values())?;
    if source.source.first().map(|f| f.grid()) != Some(phi_terminal.grid()) {
        return Err(Error::GridMismatch("terminal datum and source".into()));
    }
    Ok(())
}

fn value_diagnostics(time: f64, phi: &ScalarField, min_v: f64) -> Result<HjbDiagnostics> {
    Ok(HjbDiagnostics { time, sup: phi.max_abs(), grad_sup: grid::gradient(phi)?.sup_norm(), min_v })
}

/// Non-conservative upwind step of `v_s + b·∇v = 0`.
fn advect(v: &ScalarField, b: &VectorField, ds: f64) -> ScalarField {
    let g = v.grid();
    let x = v.values();
    let lambda = ds / g.h();
    let mut out = x.to_vec();
    for axis in 0..g.dim() {
        let c = b.component(axis).values();
        for (i, o) in out.iter_mut().enumerate() {
            let up = x[g.shift(i, axis, 1)] - x[i];
            let down = x[i] - x[g.shift(i, axis, -1)];
            *o -= lambda * (c[i].max(0.0) * down + c[i].min(0.0) * up);
        }
    }
    ScalarField::new(g, out).expect("same grid")
}

/// One reversed-time step of `v_s = Δv − b·∇v − (f/2)v` with frozen coefficients.
pub fn hopf_cole_step(v: &ScalarField, b: &VectorField, f: &ScalarField, ds: f64) -> Result<ScalarField> {
    let g = v.grid();
    let number = g.dim() as f64 * ds * b.sup_norm() / g.h();
    if number > 1.0 {
        return Err(Error::Cfl { number, admissible_dt: ds / number });
    }
    let reacted = advect(v, b, ds).zip_map(f, |a, fi| a * (-0.5 * ds * fi).exp())?;
    Ok(grid::heat_semigroup(&reacted, ds))
}

/// Backward solve through the Hopf–Cole variable. Intervals whose drift
/// violates `d·ds·‖b‖∞/h ≤ 1` are split into `2^j` substeps.
pub fn hopf_cole_solve(phi_terminal: &ScalarField, source: &SourceAssembly, mesh: &TimeMesh) -> Result<ValueTrajectory> {
    hopf_cole_solve_with_safety(phi_terminal, source, mesh, 1.0)
}

/// [`hopf_cole_solve`] keeping the advection CFL number below `safety ∈ (0, 1]`.
pub fn hopf_cole_solve_with_safety(
    phi_terminal: &ScalarField,
    source: &SourceAssembly,
    mesh: &TimeMesh,
    safety: f64,
) -> Result<ValueTrajectory> {
    check_source(phi_terminal, source, mesh)?;
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::InvalidParameter(format!("CFL safety factor {safety} outside (0, 1]")));
    }
    let g = phi_terminal.grid();
    let ds = mesh.dt();
    let steps = mesh.steps();
    let mut frames = vec![ScalarField::zeros(g); mesh.nodes()];
    let mut diags = vec![None; mesh.nodes()];
    let mut substeps = vec![1; steps];

    // v is stored normalised by its max; `log_scale` carries the factor.
    let mut v = phi_terminal.map(|p| (-0.5 * p).exp());
    let mut log_scale = 0.0;
    let s = v.max();
    v = v.scale(1.0 / s);
    log_scale += s.ln();
    frames[steps] = phi_terminal.clone();
    diags[steps] = Some(value_diagnostics(mesh.horizon(), phi_terminal, (v.min().ln() + log_scale).exp())?);

    for k in (0..steps).rev() {
        let b = &source.interaction[k + 1];
        let f = &source.source[k + 1];
        let bound = b.sup_norm();
        let mut m = 1usize;
        while g.dim() as f64 * (ds / m as f64) * bound / g.h() > safety {
            m *= 2;
            if m > MAX_SUBSTEPS {
                return Err(Error::CflRefinement { time: mesh.time(k + 1), substeps: MAX_SUBSTEPS });
            }
        }
        for _ in 0..m {
            v = hopf_cole_step(&v, b, f, ds / m as f64)?;
        }
        let min = v.min();
        if !(min > 0.0) {
            return Err(Error::NonPositiveHopfCole { min, time: mesh.time(k) });
        }
        let s = v.max();
        v = v.scale(1.0 / s);
        log_scale += s.ln();
        let phi = v.map(|x| -2.0 * (x.ln() + log_scale));
        diags[k] = Some(value_diagnostics(mesh.time(k), &phi, (min.ln() - s.ln() + log_scale).exp())?);
        frames[k] = phi;
        substeps[k] = m;
    }
    let diagnostics = diags.into_iter().map(|d| d.expect("every node visited")).collect();
    Ok(ValueTrajectory { mesh: *mesh, frames, diagnostics, substeps })
}

/// Godunov numerical Hamiltonian of `|p|²/2`, summed over axes.
fn godunov(phi: &ScalarField) -> (ScalarField, [f64; 3]) {
    let g = phi.grid();
    let x = phi.values();
    let inv_h = 1.0 / g.h();
    let mut max_slope = [0.0f64; 3];
    let mut out = vec![0.0; g.len()];
    for axis in 0..g.dim() {
        for (i, o) in out.iter_mut().enumerate() {
            let dp = (x[g.shift(i, axis, 1)] - x[i]) * inv_h;
            let dm = (x[i] - x[g.shift(i, axis, -1)]) * inv_h;
            max_slope[axis] = max_slope[axis].max(dp.abs()).max(dm.abs());
            *o += 0.5 * dm.max(0.0).powi(2).max(dp.min(0.0).powi(2));
        }
    }
    (ScalarField::new(g, out).expect("same grid"), max_slope)
}

/// Monotone explicit scheme on `Φ` directly: per reversed step
/// `Φ* = Φ + ds(−H_G(Φ) − (b·∇Φ)_upwind + f)` followed by the heat semigroup.
/// Steps violating `ds Σ_a (max|D^±Φ| + ‖b_a‖∞)/h ≤ 1` are rejected.
pub fn hjb_direct_solve(phi_terminal: &ScalarField, source: &SourceAssembly, mesh: &TimeMesh) -> Result<ValueTrajectory> {
    check_source(phi_terminal, source, mesh)?;
    let g = phi_terminal.grid();
    let ds = mesh.dt();
    let steps = mesh.steps();
    let mut frames = vec![ScalarField::zeros(g); mesh.nodes()];
    let mut diags = vec![None; mesh.nodes()];
    let mut phi = phi_terminal.clone();
    diags[steps] = Some(value_diagnostics(mesh.horizon(), &phi, f64::NAN)?);
    for k in (0..steps).rev() {
        let b = &source.interaction[k + 1];
        let f = &source.source[k + 1];
        let (h, slope) = godunov(&phi);
        let number = ds
            * (0..g.dim()).map(|a| slope[a] + b.component(a).max_abs()).sum::<f64>()
            / g.h();
        if number > 1.0 {
            return Err(Error::Cfl { number, admissible_dt: ds / number });
        }
        // advect(Φ) − Φ = −ds (b·∇Φ)_upwind
        let star = advect(&phi, b, ds)
            .sub(&h.scale(ds))?
            .add(&f.scale(ds))?;
        phi = grid::heat_semigroup(&star, ds);
        check_finite("value iterate", phi.values())?;
        diags[k] = Some(value_diagnostics(mesh.time(k), &phi, f64::NAN)?);
        frames[k] = phi.clone();
    }
    frames[steps] = phi_terminal.clone();
    let diagnostics = diags.into_iter().map(|d| d.expect("every node visited")).collect();
    Ok(ValueTrajectory { mesh: *mesh, frames, diagnostics, substeps: vec![1; steps] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    const TWO_PI: f64 = 2.0 * PI;

    fn uniform_source(g: &TorusGrid, mesh: &TimeMesh, f: ScalarField, b: VectorField) -> SourceAssembly {
        let n = mesh.nodes();
        SourceAssembly {
            mesh: *mesh,
            interaction: vec![b; n],
            coupling: vec![f.clone(); n],
            nonlocal: vec![ScalarField::zeros(g); n],
            source: vec![f; n],
        }
    }

    #[test]
    fn constant_source_shifts_linearly() {
        let g = TorusGrid::new(1, 16).unwrap();
        let mesh = TimeMesh::new(0.5, 50).unwrap();
        let src = uniform_source(&g, &mesh, ScalarField::constant(&g, 0.8), VectorField::zeros(&g));
        let phi_t = ScalarField::constant(&g, 0.3);
        let traj = hopf_cole_solve(&phi_t, &src, &mesh).unwrap();
        for k in 0..mesh.nodes() {
            let expected = 0.3 + 0.8 * (0.5 - mesh.time(k));
            assert!((traj.at(k).max() - expected).abs() < 1e-13);
            assert!((traj.at(k).min() - expected).abs() < 1e-13);
        }
        let direct = hjb_direct_solve(&phi_t, &src, &mesh).unwrap();
        assert!(traj.distance(&direct).unwrap().0 < 1e-13);
    }

    #[test]
    fn heat_only_matches_cole_hopf_formula() {
        // f = 0, b = 0: v = e^{-Φ/2} solves the heat equation exactly
        let g = TorusGrid::new(1, 64).unwrap();
        let mesh = TimeMesh::new(0.1, 20).unwrap();
        let phi_t = g.sample(|x| 0.5 * (TWO_PI * x[0]).cos());
        let src = uniform_source(&g, &mesh, ScalarField::zeros(&g), VectorField::zeros(&g));
        let traj = hopf_cole_solve(&phi_t, &src, &mesh).unwrap();
        let v0 = grid::heat_semigroup(&phi_t.map(|p| (-0.5 * p).exp()), 0.1);
        let exact = v0.map(|v| -2.0 * v.ln());
        assert!(traj.at(0).sub(&exact).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn schemes_agree_to_first_order() {
        let g = TorusGrid::new(1, 64).unwrap();
        let phi_t = g.sample(|x| 0.3 * (TWO_PI * x[0]).cos());
        let f = g.sample(|x| 0.5 * (TWO_PI * x[0]).sin());
        let b = VectorField::new(vec![g.sample(|x| 0.2 * (TWO_PI * x[0]).cos())]).unwrap();
        let gap = |steps| {
            let mesh = TimeMesh::new(0.3, steps).unwrap();
            let src = uniform_source(&g, &mesh, f.clone(), b.clone());
            let a = hopf_cole_solve(&phi_t, &src, &mesh).unwrap();
            let d = hjb_direct_solve(&phi_t, &src, &mesh).unwrap();
            a.distance(&d).unwrap().0
        };
        assert!(gap(300) < 5e-3);
    }

    #[test]
    fn direct_scheme_rejects_large_steps() {
        let g = TorusGrid::new(1, 64).unwrap();
        let mesh = TimeMesh::new(1.0, 2).unwrap();
        let phi_t = g.sample(|x| (TWO_PI * x[0]).cos());
        let src = uniform_source(&g, &mesh, ScalarField::zeros(&g), VectorField::zeros(&g));
        assert!(matches!(hjb_direct_solve(&phi_t, &src, &mesh).unwrap_err(), Error::Cfl { .. }));
    }
}
