//! Interaction potentials, couplings, boundary data and the regularity checks
//! the existence theory relies on:
//!
//! - (A1) `W ∈ C^{1,1}`: finite `‖∇W‖∞`, `‖∇²W‖∞`;
//! - (A2) `U(·, m)` bounded in `C²` uniformly in `m` and Lipschitz in `m` for the `L²` norm;
//! - (A3) `ρ₀ ≥ 0` with unit mass, finite `φ_T`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_finite, Error, Result};
use crate::grid::{self, ScalarField, TimeMesh, TorusGrid, VectorField, MAX_DIM};

/// One term `amplitude · cos(2π k·x + phase)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierMode {
    pub amplitude: f64,
    pub wave: Vec<i32>,
    pub phase: f64,
}

impl FourierMode {
    pub fn cos(amplitude: f64, wave: &[i32]) -> Self {
        Self { amplitude, wave: wave.to_vec(), phase: 0.0 }
    }

    pub fn sin(amplitude: f64, wave: &[i32]) -> Self {
        Self { amplitude, wave: wave.to_vec(), phase: -PI / 2.0 }
    }

    fn arg(&self, x: &[f64]) -> f64 {
        2.0 * PI * self.wave.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum::<f64>() + self.phase
    }

    fn k(&self, axis: usize) -> f64 {
        self.wave.get(axis).copied().unwrap_or(0) as f64
    }
}

/// A finite trigonometric polynomial `c + Σ A cos(2π k·x + p)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FourierSeries {
    pub constant: f64,
    pub modes: Vec<FourierMode>,
}

impl FourierSeries {
    pub fn new(constant: f64, modes: Vec<FourierMode>) -> Self {
        Self { constant, modes }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.modes.iter().map(|m| m.amplitude * m.arg(x).cos()).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64], axis: usize) -> f64 {
        -self.modes.iter().map(|m| m.amplitude * 2.0 * PI * m.k(axis) * m.arg(x).sin()).sum::<f64>()
    }

    pub fn hessian(&self, x: &[f64], a: usize, b: usize) -> f64 {
        -self
            .modes
            .iter()
            .map(|m| m.amplitude * 4.0 * PI * PI * m.k(a) * m.k(b) * m.arg(x).cos())
            .sum::<f64>()
    }

    pub fn sample(&self, grid: &TorusGrid) -> ScalarField {
        grid.sample(|x| self.value(x))
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        for m in &self.modes {
            if m.wave.len() != dim {
                return Err(Error::InvalidParameter(format!(
                    "mode wave vector {:?} does not match dimension {dim}",
                    m.wave
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialKind {
    /// `w(r) = -C_A e^{-r/l_A} + C_R e^{-r/l_R}` evaluated at the torus distance.
    Morse { c_a: f64, l_a: f64, c_r: f64, l_r: f64 },
    /// `w(r) = r^a/a - r^b/b`.
    PowerLaw { a: f64, b: f64 },
    Trigonometric(FourierSeries),
    Tabulated(ScalarField),
}

/// Interaction kernel `W`. `smoothing` is the Gaussian mollification width;
/// `None` picks `2h` for radial kinds (whose gradient jumps across the cube
/// faces) and no smoothing otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub kind: PotentialKind,
    pub smoothing: Option<f64>,
}

/// Sampled potential with the norm estimates used by the Lipschitz budget.
#[derive(Clone, Debug)]
pub struct PotentialSample {
    pub w: ScalarField,
    pub grad_w: VectorField,
    /// Nodal max of `|∇W|` as sampled.
    pub grad_norm: f64,
    /// `max(analytic, finite-difference)` nodal bound on `|∂_a∂_b W|`.
    pub hess_norm: f64,
    /// Nodal max of the analytic second derivatives of the raw formula.
    pub analytic_hess_norm: Option<f64>,
    /// Finite-difference second derivatives of the sampled field at spacing `h` and `2h`.
    pub fd_hess_norm: f64,
    pub fd_hess_norm_coarse: f64,
    pub smoothing: f64,
    pub warnings: Vec<String>,
}

impl PotentialSample {
    /// Resolution test for `C^{1,1}`: a bounded second derivative gives the same
    /// finite-difference estimate at `h` and `2h`; kinks scale like `1/h` and
    /// jumps like `1/h²`.
    pub fn is_c11_resolved(&self) -> bool {
        let finite = self.grad_norm.is_finite() && self.hess_norm.is_finite();
        finite && self.fd_hess_norm <= 1.5 * self.fd_hess_norm_coarse + 1e-9
    }
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Self {
        Self { kind, smoothing: None }
    }

    pub fn with_smoothing(mut self, width: f64) -> Self {
        self.smoothing = Some(width);
        self
    }

    /// `W ≡ 0`.
    pub fn zero() -> Self {
        Self::new(PotentialKind::Trigonometric(FourierSeries::default()))
    }

    pub fn morse(c_a: f64, l_a: f64, c_r: f64, l_r: f64) -> Self {
        Self::new(PotentialKind::Morse { c_a, l_a, c_r, l_r })
    }

    pub fn power_law(a: f64, b: f64) -> Self {
        Self::new(PotentialKind::PowerLaw { a, b })
    }

    pub fn trigonometric(series: FourierSeries) -> Self {
        Self::new(PotentialKind::Trigonometric(series))
    }

    pub fn tabulated(field: ScalarField) -> Self {
        Self::new(PotentialKind::Tabulated(field))
    }

    fn is_radial(&self) -> bool {
        matches!(self.kind, PotentialKind::Morse { .. } | PotentialKind::PowerLaw { .. })
    }

    fn check_params(&self) -> Result<()> {
        match &self.kind {
            PotentialKind::PowerLaw { a, b } => {
                if !(*a >= 2.0 && *b >= 2.0) {
                    return Err(Error::Assumption {
                        id: "A1",
                        detail: format!("power law needs a, b >= 2 for W in C^{{1,1}}, got a={a}, b={b}"),
                    });
                }
            }
            PotentialKind::Morse { c_a, l_a, c_r, l_r }
                if !(*l_a > 0.0 && *l_r > 0.0 && *c_r > 0.0 && c_a.is_finite()) => {
                    return Err(Error::InvalidParameter(format!(
                        "Morse parameters must have positive lengths and C_R, got {c_a} {l_a} {c_r} {l_r}"
                    )));
                }
            _ => {}
        }
        if let Some(s) = self.smoothing {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("smoothing width {s}")));
            }
        }
        Ok(())
    }

    /// `(w, w', w'')` of a radial profile.
    fn radial(&self, r: f64) -> (f64, f64, f64) {
        match self.kind {
            PotentialKind::Morse { c_a, l_a, c_r, l_r } => {
                let ea = (-r / l_a).exp();
                let er = (-r / l_r).exp();
                (
                    -c_a * ea + c_r * er,
                    c_a / l_a * ea - c_r / l_r * er,
                    -c_a / (l_a * l_a) * ea + c_r / (l_r * l_r) * er,
                )
            }
            PotentialKind::PowerLaw { a, b } => (
                r.powf(a) / a - r.powf(b) / b,
                r.powf(a - 1.0) - r.powf(b - 1.0),
                (a - 1.0) * r.powf(a - 2.0) - (b - 1.0) * r.powf(b - 2.0),
            ),
            _ => unreachable!("radial profile of a non-radial potential"),
        }
    }

    /// Raw formula at a point of the cube (radial kinds use the cube
    /// representative, so the result is 1-periodic).
    pub fn raw_value(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            PotentialKind::Trigonometric(s) => Some(s.value(x)),
            PotentialKind::Tabulated(_) => None,
            _ => Some(self.radial(torus_norm(x)).0),
        }
    }

    fn raw_gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            PotentialKind::Trigonometric(s) => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = s.gradient(x, a);
                }
            }
            _ => {
                let y = reduce(x);
                let r = norm(&y[..x.len()]);
                let (_, dw, _) = self.radial(r);
                for (a, o) in out.iter_mut().enumerate() {
                    *o = if r > 0.0 { dw * y[a] / r } else { 0.0 };
                }
            }
        }
    }

    /// Max over `(a, b)` of `|∂_a∂_b W|` at one point.
    fn raw_hessian_sup(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut sup: f64 = 0.0;
        match &self.kind {
            PotentialKind::Trigonometric(s) => {
                for a in 0..d {
                    for b in a..d {
                        sup = sup.max(s.hessian(x, a, b).abs());
                    }
                }
            }
            _ => {
                let y = reduce(x);
                let r = norm(&y[..d]);
                let (_, dw, d2w) = self.radial(r);
                if r == 0.0 {
                    return d2w.abs();
                }
                let tangential = dw / r;
                for a in 0..d {
                    for b in a..d {
                        let (ua, ub) = (y[a] / r, y[b] / r);
                        let delta = if a == b { 1.0 } else { 0.0 };
                        let h = d2w * ua * ub + tangential * (delta - ua * ub);
                        sup = sup.max(h.abs());
                    }
                }
            }
        }
        sup
    }

    /// Well-preparedness `C l^d < 1` with `C = C_A/C_R`, `l = l_A/l_R` (Morse only).
    pub fn well_prepared(&self, dim: usize) -> Option<bool> {
        match self.kind {
            PotentialKind::Morse { c_a, l_a, c_r, l_r } => Some((c_a / c_r) * (l_a / l_r).powi(dim as i32) < 1.0),
            _ => None,
        }
    }

    pub fn sample(&self, grid: &TorusGrid) -> Result<PotentialSample> {
        sample_potential(self, grid)
    }
}

fn reduce(x: &[f64]) -> [f64; MAX_DIM] {
    let mut y = [0.0; MAX_DIM];
    for (a, &xi) in x.iter().enumerate() {
        y[a] = (xi + 0.5).rem_euclid(1.0) - 0.5;
    }
    y
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean norm of the cube representative of `x`.
pub fn torus_norm(x: &[f64]) -> f64 {
    norm(&reduce(x)[..x.len()])
}

/// Samples `W`, `∇W` and the norm estimates on `grid`.
pub fn sample_potential(p: &Potential, grid: &TorusGrid) -> Result<PotentialSample> {
    p.check_params()?;
    let d = grid.dim();
    if let PotentialKind::Trigonometric(s) = &p.kind {
        s.check_dim(d)?;
    }
    let mut warnings = Vec::new();
    if p.well_prepared(d) == Some(false) {
        let msg = "Morse parameters are not well prepared (C l^d >= 1)".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let smoothing = p.smoothing.unwrap_or(if p.is_radial() { 2.0 * grid.h() } else { 0.0 });

    let raw = match &p.kind {
        PotentialKind::Tabulated(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch("tabulated potential sampled on a different grid".into()));
            }
            f.clone()
        }
        _ => grid.sample(|x| p.raw_value(x).unwrap()),
    };
    check_finite("potential", raw.values())?;

    let (w, grad_w) = match (&p.kind, smoothing > 0.0) {
        (PotentialKind::Tabulated(_), _) | (_, true) => {
            let w = grid::mollify(&raw, smoothing);
            let g = grid::gradient(&w)?;
            (w, g)
        }
        _ => {
            let mut comps = vec![Vec::with_capacity(grid.len()); d];
            let mut buf = [0.0; MAX_DIM];
            for i in 0..grid.len() {
                let x = grid.node(i);
                p.raw_gradient(&x[..d], &mut buf[..d]);
                for a in 0..d {
                    comps[a].push(buf[a]);
                }
            }
            let comps = comps.into_iter().map(|c| ScalarField::new(grid, c)).collect::<Result<Vec<_>>>()?;
            (raw.clone(), VectorField::new(comps)?)
        }
    };

    let analytic_hess_norm = match p.kind {
        PotentialKind::Tabulated(_) => None,
        _ => Some((0..grid.len()).map(|i| p.raw_hessian_sup(&grid.node(i)[..d])).fold(0.0, f64::max)),
    };
    let fd_hess_norm = grid::fd_hessian_sup(&w, 1);
    let fd_hess_norm_coarse = grid::fd_hessian_sup(&w, 2);
    let hess_norm = analytic_hess_norm.unwrap_or(0.0).max(fd_hess_norm);
    let grad_norm = grad_w.sup_norm();
    Ok(PotentialSample {
        w,
        grad_w,
        grad_norm,
        hess_norm,
        analytic_hess_norm,
        fd_hess_norm,
        fd_hess_norm_coarse,
        smoothing,
        warnings,
    })
}

/// Pointwise running cost `ℓ(x, r)` with its density derivative `∂ℓ/∂r`.
#[derive(Clone)]
pub struct LocalRunningCost {
    value: Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>,
    density_derivative: Option<Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for LocalRunningCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LocalRunningCost")
            .field("has_density_derivative", &self.density_derivative.is_some())
            .finish()
    }
}

impl LocalRunningCost {
    pub fn new(
        value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        density_derivative: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { value: Arc::new(value), density_derivative: Some(Arc::new(density_derivative)) }
    }

    /// Running cost without a derivative; usable in cost evaluation only.
    pub fn value_only(value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { value: Arc::new(value), density_derivative: None }
    }

    pub fn evaluate(&self, m: &ScalarField) -> ScalarField {
        let g = m.grid();
        let d = g.dim();
        let v = (0..g.len()).map(|i| (self.value)(&g.node(i)[..d], m.values()[i])).collect();
        ScalarField::from_raw(g, v)
    }
}

/// `U(x, m) = ℓ(x, m) + ∂ℓ/∂r(x, m)·m`.
pub fn derive_coupling_from_running_cost(cost: &LocalRunningCost, m: &ScalarField) -> Result<ScalarField> {
    check_finite("density", m.values())?;
    let deriv = cost
        .density_derivative
        .as_ref()
        .ok_or(Error::MissingEstimate("density derivative of the running cost"))?;
    let g = m.grid();
    let d = g.dim();
    let v = (0..g.len())
        .map(|i| {
            let x = &g.node(i)[..d];
            let r = m.values()[i];
            (cost.value)(x, r) + deriv(x, r) * r
        })
        .collect::<Vec<_>>();
    ScalarField::new(g, v)
}

/// Running cost `L(x, ρ)` entering the cost functional.
#[derive(Clone, Debug)]
pub enum RunningCost {
    Local(LocalRunningCost),
    /// `L = V + ½ K⋆ρ` (symmetric `K`), whose first variation is `V + K⋆ρ`.
    Nonlocal { v: ScalarField, kernel: ScalarField },
}

impl RunningCost {
    pub fn evaluate(&self, rho: &ScalarField) -> Result<ScalarField> {
        match self {
            RunningCost::Local(l) => Ok(l.evaluate(rho)),
            RunningCost::Nonlocal { v, kernel } => v.add(&grid::convolve(kernel, rho)?.scale(0.5)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Coupling {
    Constant(f64),
    AdditiveNonlocal { v: ScalarField, kernel: Potential, kernel_sample: Box<PotentialSample> },
    /// `c₁ · min(m, cap)^p`, saturated so the sup bound holds.
    LocalPower { c1: f64, exponent: f64, cap: f64 },
}

/// Reported bounds on the coupling over unit-mass nonnegative densities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CouplingBounds {
    pub sup: f64,
    pub grad_sup: Option<f64>,
    pub c2: Option<f64>,
    /// Constant in `|U(x,m₁) − U(x,m₂)| ≤ C_U ‖m₁ − m₂‖_{L²}`.
    pub lipschitz_l2: f64,
}

impl Coupling {
    pub fn constant(c: f64) -> Self {
        Coupling::Constant(c)
    }

    pub fn additive_nonlocal(v: ScalarField, kernel: Potential) -> Result<Self> {
        let kernel_sample = Box::new(kernel.sample(v.grid())?);
        Ok(Coupling::AdditiveNonlocal { v, kernel, kernel_sample })
    }

    pub fn local_power(c1: f64, exponent: f64, cap: f64) -> Result<Self> {
        if !(exponent >= 1.0 && cap > 0.0 && c1.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "local power coupling needs p >= 1 and a positive cap, got p={exponent}, cap={cap}"
            )));
        }
        Ok(Coupling::LocalPower { c1, exponent, cap })
    }

    pub fn evaluate(&self, m: &ScalarField) -> Result<ScalarField> {
        check_finite("coupling density", m.values())?;
        match self {
            Coupling::Constant(c) => Ok(ScalarField::constant(m.grid(), *c)),
            Coupling::AdditiveNonlocal { v, kernel_sample, .. } => v.add(&grid::convolve(&kernel_sample.w, m)?),
            Coupling::LocalPower { c1, exponent, cap } => {
                Ok(m.map(|r| c1 * r.clamp(0.0, *cap).powf(*exponent)))
            }
        }
    }

    pub fn bounds(&self, grid: &TorusGrid) -> Result<CouplingBounds> {
        Ok(match self {
            Coupling::Constant(c) => {
                CouplingBounds { sup: c.abs(), grad_sup: Some(0.0), c2: Some(c.abs()), lipschitz_l2: 0.0 }
            }
            Coupling::AdditiveNonlocal { v, kernel_sample, .. } => {
                let k = &kernel_sample.w;
                let sup = v.max_abs() + k.max_abs();
                let grad = grid::gradient(v)?.sup_norm() + kernel_sample.grad_norm;
                let hess = grid::fd_hessian_sup(v, 1) + kernel_sample.hess_norm;
                CouplingBounds { sup, grad_sup: Some(grad), c2: Some(sup + grad + hess), lipschitz_l2: k.l2_norm() }
            }
            Coupling::LocalPower { c1, exponent, cap } => {
                let sup = c1.abs() * cap.powf(*exponent);
                // a local map is L² → L∞ Lipschitz only through the grid: |δm(x)| ≤ h^{-d/2} ‖δm‖
                let lip = c1.abs() * exponent * cap.powf(exponent - 1.0) * grid.cell_volume().powf(-0.5);
                CouplingBounds { sup, grad_sup: None, c2: None, lipschitz_l2: lip }
            }
        })
    }

    /// Running cost whose first variation reproduces this coupling.
    pub fn running_cost(&self) -> Option<RunningCost> {
        match self {
            Coupling::Constant(c) => {
                let c = *c;
                Some(RunningCost::Local(LocalRunningCost::new(move |_, _| c, |_, _| 0.0)))
            }
            Coupling::AdditiveNonlocal { v, kernel_sample, .. } => {
                Some(RunningCost::Nonlocal { v: v.clone(), kernel: kernel_sample.w.clone() })
            }
            Coupling::LocalPower { c1, exponent, cap } => {
                let (c1, p, cap) = (*c1, *exponent, *cap);
                Some(RunningCost::Local(LocalRunningCost::new(
                    move |_, r| {
                        let r = r.max(0.0);
                        if r <= cap {
                            c1 * r.powf(p) / (p + 1.0)
                        } else {
                            c1 * cap.powf(p) - c1 * p * cap.powf(p + 1.0) / ((p + 1.0) * r)
                        }
                    },
                    move |_, r| {
                        let r = r.max(0.0);
                        if r <= cap {
                            c1 * p * r.powf(p - 1.0) / (p + 1.0)
                        } else {
                            c1 * p * cap.powf(p + 1.0) / ((p + 1.0) * r * r)
                        }
                    },
                )))
            }
        }
    }
}

/// Full problem data on a fixed discretization.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub grid: TorusGrid,
    pub mesh: TimeMesh,
    pub potential: Potential,
    pub coupling: Coupling,
    pub rho0: ScalarField,
    pub phi_terminal: ScalarField,
    /// Target CFL number for automatic substepping, in `(0, 1]`.
    pub cfl_safety: f64,
    potential_sample: PotentialSample,
}

impl ProblemSpec {
    pub fn new(
        grid: TorusGrid,
        mesh: TimeMesh,
        potential: Potential,
        coupling: Coupling,
        rho0: ScalarField,
        phi_terminal: ScalarField,
    ) -> Result<Self> {
        if rho0.grid() != &grid || phi_terminal.grid() != &grid {
            return Err(Error::GridMismatch("boundary data live on a different grid".into()));
        }
        if let Coupling::AdditiveNonlocal { v, .. } = &coupling {
            if v.grid() != &grid {
                return Err(Error::GridMismatch("coupling lives on a different grid".into()));
            }
        }
        check_finite("initial density", rho0.values())?;
        check_finite("terminal datum", phi_terminal.values())?;
        let potential_sample = potential.sample(&grid)?;
        Ok(Self { grid, mesh, potential, coupling, rho0, phi_terminal, cfl_safety: 1.0, potential_sample })
    }

    pub fn potential_sample(&self) -> &PotentialSample {
        &self.potential_sample
    }

    pub fn grad_w(&self) -> &VectorField {
        &self.potential_sample.grad_w
    }

    /// Same data on a different time mesh.
    pub fn with_mesh(&self, mesh: TimeMesh) -> Self {
        Self { mesh, ..self.clone() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
    pub measured: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Smooth strictly positive unit-mass density built from a few random modes.
pub fn random_density<R: Rng>(grid: &TorusGrid, rng: &mut R, modes: usize) -> ScalarField {
    let d = grid.dim();
    let mut series = FourierSeries::new(1.0, Vec::new());
    for _ in 0..modes {
        let wave: Vec<i32> = (0..d).map(|_| rng.random_range(-3..=3)).collect();
        series.modes.push(FourierMode {
            amplitude: rng.random_range(0.0..0.8) / modes as f64,
            wave,
            phase: rng.random_range(0.0..2.0 * PI),
        });
    }
    let f = series.sample(grid);
    let mass = grid::integrate(&f);
    f.scale(1.0 / mass)
}

pub const LIPSCHITZ_PROBES: usize = 20;

/// Checks (A1)–(A3) and reports measured constants; failures are entries, not errors.
pub fn validate_assumptions(spec: &ProblemSpec) -> AssumptionReport {
    let mut checks = Vec::new();
    let ps = &spec.potential_sample;

    let a1 = ps.is_c11_resolved();
    checks.push(AssumptionCheck {
        id: "A1",
        passed: a1,
        detail: if a1 {
            "W in C^{1,1} at grid resolution".into()
        } else {
            "second derivative of W does not stay bounded under refinement".into()
        },
        measured: measured(&[
            ("grad_w_sup", ps.grad_norm),
            ("hess_w_sup", ps.hess_norm),
            ("hess_w_fd_h", ps.fd_hess_norm),
            ("hess_w_fd_2h", ps.fd_hess_norm_coarse),
        ]),
    });

    checks.push(check_coupling(spec));

    let mass = grid::integrate(&spec.rho0);
    let min = spec.rho0.min();
    let phi_finite = spec.phi_terminal.is_finite();
    let a3 = (mass - 1.0).abs() <= 1e-12 && min >= 0.0 && phi_finite;
    checks.push(AssumptionCheck {
        id: "A3",
        passed: a3,
        detail: if a3 {
            "rho0 is a probability density, phi_T finite".into()
        } else {
            format!("mass {mass:.15}, min {min:.3e}, phi_T finite {phi_finite}")
        },
        measured: measured(&[("rho0_mass", mass), ("rho0_min", min)]),
    });

    AssumptionReport { checks, warnings: ps.warnings.clone() }
}

fn measured(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_coupling(spec: &ProblemSpec) -> AssumptionCheck {
    let bounds = match spec.coupling.bounds(&spec.grid) {
        Ok(b) => b,
        Err(e) => {
            return AssumptionCheck { id: "A2", passed: false, detail: e.to_string(), measured: BTreeMap::new() };
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x005e_eda2);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_sup: f64 = 0.0;
    let mut ok = true;
    for _ in 0..LIPSCHITZ_PROBES {
        let m1 = random_density(&spec.grid, &mut rng, 3);
        let m2 = random_density(&spec.grid, &mut rng, 3);
        let (u1, u2) = match (spec.coupling.evaluate(&m1), spec.coupling.evaluate(&m2)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                ok = false;
                continue;
            }
        };
        let gap = u1.sub(&u2).expect("same grid").max_abs();
        let dist = m1.sub(&m2).expect("same grid").l2_norm();
        if dist > 0.0 {
            worst_ratio = worst_ratio.max(gap / dist);
        }
        worst_sup = worst_sup.max(u1.max_abs()).max(u2.max_abs());
    }
    let tol = 1e-12 * (1.0 + bounds.sup);
    ok &= worst_ratio <= bounds.lipschitz_l2 * (1.0 + 1e-9) + tol;
    ok &= worst_sup <= bounds.sup * (1.0 + 1e-9) + tol;
    ok &= spec.phi_terminal.is_finite() && grid::fd_hessian_sup(&spec.phi_terminal, 1).is_finite();
    AssumptionCheck {
        id: "A2",
        passed: ok,
        detail: format!("{LIPSCHITZ_PROBES} Lipschitz probes against C_U = {:.6e}", bounds.lipschitz_l2),
        measured: measured(&[
            ("u_sup_bound", bounds.sup),
            ("u_sup_measured", worst_sup),
            ("lipschitz_bound", bounds.lipschitz_l2),
            ("lipschitz_measured", worst_ratio),
        ]),
    }
}
