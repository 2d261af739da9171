//! Stochastic counterparts of the PDE solution: the interacting particle
//! system, adjoint flows started from a point mass, and the Wasserstein-1
//! distance used to compare empirical measures with grid densities.
//!
//! All dynamics use unit diffusion, `dX = −drift dt + √2 dB`, and wrap
//! positions back into `[−1/2, 1/2)^d`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, ScalarField, TorusGrid, VectorField, MAX_DIM};
use crate::hjb::{SourceAssembly, ValueTrajectory};
use crate::problem::{torus_norm, ProblemSpec};

/// Particle counts up to this use exact pairwise interaction; larger
/// clouds deposit onto the grid and convolve spectrally.
pub const PAIRWISE_MAX: usize = 512;

/// Batches used for the Monte Carlo standard error.
pub const BATCHES: usize = 16;

fn wrap(x: f64) -> f64 {
    let y = (x + 0.5).rem_euclid(1.0) - 0.5;
    // rem_euclid can round up to exactly 1.0
    if y >= 0.5 {
        -0.5
    } else {
        y
    }
}

/// Equally weighted points on the torus, stored row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    positions: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) || !positions.len().is_multiple_of(dim) || positions.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} coordinates do not form a cloud in dimension {dim}",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "particle positions", index: 0 });
        }
        Ok(Self { dim, positions: positions.into_iter().map(wrap).collect() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Draws `n` points from a grid density read as constant on each cell
    /// `x_i + [−h/2, h/2)^d`.
    pub fn sample<R: Rng>(density: &ScalarField, n: usize, rng: &mut R) -> Result<Self> {
        let g = density.grid();
        let weights: Vec<f64> = density.values().iter().map(|v| v.max(0.0)).collect();
        let pick = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidParameter(format!("cannot sample density: {e}")))?;
        let d = g.dim();
        let h = g.h();
        let mut positions = Vec::with_capacity(n * d);
        for _ in 0..n {
            let node = g.node(pick.sample(rng));
            for x in &node[..d] {
                positions.push(wrap(x + h * (rng.random::<f64>() - 0.5)));
            }
        }
        Self::new(d, positions)
    }

    /// Cloud-in-cell density on `grid` (unit mass).
    pub fn deposit(&self, grid: &TorusGrid) -> Result<ScalarField> {
        if grid.dim() != self.dim {
            return Err(Error::GridMismatch("cloud and grid dimensions differ".into()));
        }
        let mut out = vec![0.0; grid.len()];
        let w0 = 1.0 / (self.len() as f64 * grid.cell_volume());
        for i in 0..self.len() {
            for_each_corner(grid, self.position(i), |idx, w| out[grid.flat_index(idx)] += w0 * w);
        }
        ScalarField::new(grid, out)
    }
}

/// Cloud-in-cell stencil of `x`: calls `f(node index, weight)` for the
/// `2^d` surrounding nodes, with weights summing to one.
fn for_each_corner(grid: &TorusGrid, x: &[f64], mut f: impl FnMut(&[usize], f64)) {
    let d = grid.dim();
    let n = grid.n();
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for a in 0..d {
        let s = ((x[a] + 0.5) * n as f64).rem_euclid(n as f64);
        let b = (s.floor() as usize).min(n - 1);
        base[a] = b;
        frac[a] = s - b as f64;
    }
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = [0usize; MAX_DIM];
        for a in 0..d {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                idx[a] = (base[a] + 1) % n;
            } else {
                w *= 1.0 - frac[a];
                idx[a] = base[a];
            }
        }
        f(&idx[..d], w);
    }
}

/// `(1/N) Σ_{j≠i} ∇W(x_i − x_j)` at every particle.
fn empirical_interaction(cloud: &ParticleCloud, grad_w: &VectorField) -> Result<Vec<f64>> {
    let d = cloud.dim;
    let n = cloud.len();
    let mut out = vec![0.0; n * d];
    if n <= PAIRWISE_MAX {
        let mut z = [0.0; MAX_DIM];
        let mut gw = [0.0; MAX_DIM];
        for i in 0..n {
            let xi = cloud.position(i);
            for j in (0..n).filter(|&j| j != i) {
                let xj = cloud.position(j);
                for a in 0..d {
                    z[a] = wrap(xi[a] - xj[a]);
                }
                grad_w.interpolate(&z[..d], &mut gw[..d]);
                for a in 0..d {
                    out[i * d + a] += gw[a];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
    } else {
        let g = grad_w.grid();
        let field = grid::convolve_vector(grad_w, &cloud.deposit(g)?)?;
        let mut gw = [0.0; MAX_DIM];
        let mut z = [0.0; MAX_DIM];
        for i in 0..n {
            let x = cloud.position(i);
            let row = &mut out[i * d..(i + 1) * d];
            field.interpolate(x, row);
            // remove the particle's own deposit, as seen through the same stencil
            for_each_corner(g, x, |p, wp| {
                let xp = g.node(g.flat_index(p));
                for_each_corner(g, x, |q, wq| {
                    let xq = g.node(g.flat_index(q));
                    for a in 0..d {
                        z[a] = wrap(xp[a] - xq[a]);
                    }
                    grad_w.interpolate(&z[..d], &mut gw[..d]);
                    for a in 0..d {
                        row[a] -= wp * wq * gw[a] / n as f64;
                    }
                });
            });
        }
    }
    Ok(out)
}

/// Interacting particle system `dX = −(∇W⋆μ_N + ∇Φ) dt + √2 dB`, with
/// `X₀` drawn from `ρ₀`. Returns the cloud at every mesh node.
pub fn simulate_mkv(
    spec: &ProblemSpec,
    value: &ValueTrajectory,
    n: usize,
    seed: u64,
) -> Result<Vec<ParticleCloud>> {
    value.mesh.check(&spec.mesh)?;
    let grads = value.gradients()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = ParticleCloud::sample(&spec.rho0, n, &mut rng)?;
    let d = cloud.dim;
    let dt = spec.mesh.dt();
    let noise = (2.0 * dt).sqrt();
    let mut frames = Vec::with_capacity(spec.mesh.nodes());
    let mut gp = [0.0; MAX_DIM];
    for grad in grads.iter().take(spec.mesh.steps()) {
        let inter = empirical_interaction(&cloud, spec.grad_w())?;
        let mut next = cloud.positions.clone();
        for i in 0..n {
            grad.interpolate(cloud.position(i), &mut gp[..d]);
            for a in 0..d {
                let xi: f64 = rng.sample(StandardNormal);
                next[i * d + a] = wrap(next[i * d + a] - (inter[i * d + a] + gp[a]) * dt + noise * xi);
            }
        }
        frames.push(std::mem::replace(&mut cloud, ParticleCloud { dim: d, positions: next }));
    }
    frames.push(cloud);
    Ok(frames)
}

/// Which adjoint flow to run from `δ_{x₀}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AdjointFlow {
    /// Drift `−∇W⋆ρ` (interaction only).
    Zeta,
    /// Drift `−(∇W⋆ρ + ∇Φ)` (optimally controlled).
    Eta,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn batch_estimate(samples: &[f64]) -> McEstimate {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let batches = BATCHES.min(n);
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| samples[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches as f64 - 1.0).max(1.0);
    McEstimate { mean, stderr: (var / batches as f64).sqrt(), samples: n }
}

/// Per-path time integrals collected along an adjoint flow.
#[derive(Clone, Debug)]
pub struct AdjointPaths {
    pub flow: AdjointFlow,
    /// Mesh index of the start time.
    pub start: usize,
    /// `φ_T(X_T)`.
    pub terminal: Vec<f64>,
    /// `∫ |∇Φ|²/2 dt`.
    pub kinetic: Vec<f64>,
    /// `∫ ∇W⋆(ρ∇φ) dt`.
    pub nonlocal: Vec<f64>,
    /// `∫ U dt`.
    pub coupling: Vec<f64>,
    pub final_cloud: ParticleCloud,
}

/// Runs `n` copies of the adjoint flow from `x₀` at the mesh node nearest
/// `t₀`, with all coefficients frozen from a computed solution.
pub fn simulate_adjoint(
    spec: &ProblemSpec,
    value: &ValueTrajectory,
    source: &SourceAssembly,
    flow: AdjointFlow,
    x0: &[f64],
    t0: f64,
    n: usize,
    seed: u64,
) -> Result<AdjointPaths> {
    value.mesh.check(&spec.mesh)?;
    source.mesh.check(&spec.mesh)?;
    let d = spec.grid.dim();
    if x0.len() != d || n == 0 {
        return Err(Error::InvalidParameter("start point or sample count".into()));
    }
    let grads = value.gradients()?;
    let start = spec.mesh.index_of(t0);
    let dt = spec.mesh.dt();
    let noise = (2.0 * dt).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<f64> = (0..n).flat_map(|_| x0.iter().map(|&v| wrap(v))).collect();
    let (mut kinetic, mut nonlocal, mut coupling) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut gp, mut b) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
    for k in start..spec.mesh.steps() {
        for i in 0..n {
            let x = &pos[i * d..(i + 1) * d];
            grads[k].interpolate(x, &mut gp[..d]);
            source.interaction[k].interpolate(x, &mut b[..d]);
            kinetic[i] += 0.5 * gp[..d].iter().map(|v| v * v).sum::<f64>() * dt;
            nonlocal[i] += source.nonlocal[k].interpolate(x) * dt;
            coupling[i] += source.coupling[k].interpolate(x) * dt;
            for a in 0..d {
                let drift = match flow {
                    AdjointFlow::Zeta => b[a],
                    AdjointFlow::Eta => b[a] + gp[a],
                };
                let xi: f64 = rng.sample(StandardNormal);
                pos[i * d + a] = wrap(pos[i * d + a] - drift * dt + noise * xi);
            }
        }
    }
    let terminal = (0..n).map(|i| spec.phi_terminal.interpolate(&pos[i * d..(i + 1) * d])).collect();
    Ok(AdjointPaths {
        flow,
        start,
        terminal,
        kinetic,
        nonlocal,
        coupling,
        final_cloud: ParticleCloud { dim: d, positions: pos },
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ValueIdentity {
    pub flow: AdjointFlow,
    /// `Φ(x₀, t₀)` read off the grid solution.
    pub direct: f64,
    pub reconstructed: McEstimate,
    pub residual: f64,
}

/// Reconstructs `Φ(x₀, t₀)` from adjoint paths:
///
/// - `ζ`: `E[φ_T(X_T)] − E∫|∇Φ|²/2 − E∫∇W⋆(ρ∇φ) + E∫U`,
/// - `η`: `E[φ_T(X_T)] + E∫|∇Φ|²/2 − E∫∇W⋆(ρ∇φ) + E∫U`.
pub fn verify_value_identity(
    spec: &ProblemSpec,
    value: &ValueTrajectory,
    source: &SourceAssembly,
    flow: AdjointFlow,
    x0: &[f64],
    t0: f64,
    n: usize,
    seed: u64,
) -> Result<ValueIdentity> {
    let p = simulate_adjoint(spec, value, source, flow, x0, t0, n, seed)?;
    let sign = match flow {
        AdjointFlow::Zeta => -1.0,
        AdjointFlow::Eta => 1.0,
    };
    let samples: Vec<f64> = (0..n)
        .map(|i| p.terminal[i] + sign * p.kinetic[i] - p.nonlocal[i] + p.coupling[i])
        .collect();
    let reconstructed = batch_estimate(&samples);
    let direct = value.at(p.start).interpolate(x0);
    Ok(ValueIdentity { flow, direct, reconstructed, residual: reconstructed.mean - direct })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KineticBound {
    /// Monte Carlo estimate of `∫∫ |∇Φ|²/2 η`.
    pub kinetic: McEstimate,
    /// `2‖φ_T‖∞ + 2‖∇W‖∞ ∫‖∇φ‖∞ dt + 2(T − t₀)‖U‖∞`.
    pub bound: f64,
    pub holds: bool,
}

/// Checks the a priori bound on the kinetic energy along the optimally
/// controlled flow, with `∇φ` taken from the converged value itself and
/// `‖U‖∞` measured over the computed coupling.
pub fn kinetic_energy_bound(
    spec: &ProblemSpec,
    value: &ValueTrajectory,
    source: &SourceAssembly,
    x0: &[f64],
    t0: f64,
    n: usize,
    seed: u64,
) -> Result<KineticBound> {
    let p = simulate_adjoint(spec, value, source, AdjointFlow::Eta, x0, t0, n, seed)?;
    let kinetic = batch_estimate(&p.kinetic);
    let dt = spec.mesh.dt();
    let profile = value.lipschitz_profile();
    let grad_integral: f64 = profile[p.start..spec.mesh.steps()].iter().sum::<f64>() * dt;
    let sup_u = source.coupling.iter().map(|u| u.max_abs()).fold(0.0, f64::max);
    let t_start = spec.mesh.time(p.start);
    let bound = 2.0 * spec.phi_terminal.max_abs()
        + 2.0 * spec.potential_sample().grad_norm * grad_integral
        + 2.0 * (spec.mesh.horizon() - t_start) * sup_u;
    Ok(KineticBound { kinetic, bound, holds: kinetic.mean <= bound + 3.0 * kinetic.stderr })
}

/// A measure to compare: an equally weighted cloud or a grid density read as
/// constant on cells.
#[derive(Clone, Copy, Debug)]
pub enum Measure<'a> {
    Cloud(&'a ParticleCloud),
    Density(&'a ScalarField),
}

impl Measure<'_> {
    fn dim(&self) -> usize {
        match self {
            Measure::Cloud(c) => c.dim,
            Measure::Density(f) => f.grid().dim(),
        }
    }

    fn mass(&self) -> f64 {
        match self {
            Measure::Cloud(_) => 1.0,
            Measure::Density(f) => grid::integrate(f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Wasserstein {
    pub distance: f64,
    /// `false` when the value is a sampled estimate (dimension two and up).
    pub exact: bool,
}

/// Samples per measure in the assignment estimate for `d ≥ 2`.
pub const ASSIGNMENT_SAMPLES: usize = 512;

/// Wasserstein-1 distance with the torus metric. Exact in one dimension;
/// for `d ≥ 2` an optimal assignment between at most
/// [`ASSIGNMENT_SAMPLES`] points per side, flagged as an estimate.
pub fn wasserstein1(a: Measure<'_>, b: Measure<'_>) -> Result<Wasserstein> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidParameter("measures live in different dimensions".into()));
    }
    let (ma, mb) = (a.mass(), b.mass());
    if (ma - mb).abs() > 1e-9 * ma.abs().max(mb.abs()).max(1.0) {
        return Err(Error::MassMismatch(ma, mb));
    }
    if a.dim() == 1 {
        let (pa, pb) = (Pieces::from(a), Pieces::from(b));
        // canonical argument order makes the result bitwise symmetric
        let distance = if pa.key() <= pb.key() { exact_1d(&pa, &pb) } else { exact_1d(&pb, &pa) };
        return Ok(Wasserstein { distance, exact: true });
    }
    let (xa, xb) = (assignment_points(a, 1)?, assignment_points(b, 2)?);
    let mut pa = xa;
    let mut pb = xb;
    if pa > pb {
        std::mem::swap(&mut pa, &mut pb);
    }
    Ok(Wasserstein { distance: assignment_distance(&pa, &pb, a.dim()), exact: false })
}

/// One-dimensional measure as atoms plus uniformly loaded intervals.
struct Pieces {
    atoms: Vec<(f64, f64)>,
    cells: Vec<(f64, f64, f64)>,
}

impl Pieces {
    fn from(m: Measure<'_>) -> Self {
        match m {
            Measure::Cloud(c) => {
                let w = 1.0 / c.len() as f64;
                let mut atoms: Vec<(f64, f64)> = c.positions.iter().map(|&x| (x, w)).collect();
                atoms.sort_by(|p, q| p.0.total_cmp(&q.0));
                Pieces { atoms, cells: Vec::new() }
            }
            Measure::Density(f) => {
                let g = f.grid();
                let h = g.h();
                let mut cells = Vec::with_capacity(g.n() + 1);
                let v = f.values();
                // node 0 sits on −1/2, so its cell straddles the seam
                cells.push((-0.5, -0.5 + 0.5 * h, v[0] * 0.5 * h));
                for (i, &r) in v.iter().enumerate().skip(1) {
                    let x = g.coordinate(i);
                    cells.push((x - 0.5 * h, x + 0.5 * h, r * h));
                }
                cells.push((0.5 - 0.5 * h, 0.5, v[0] * 0.5 * h));
                Pieces { atoms: Vec::new(), cells }
            }
        }
    }

    fn key(&self) -> (Vec<u64>, Vec<u64>) {
        (
            self.atoms.iter().flat_map(|a| [a.0.to_bits(), a.1.to_bits()]).collect(),
            self.cells.iter().flat_map(|c| [c.0.to_bits(), c.1.to_bits(), c.2.to_bits()]).collect(),
        )
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        out.extend(self.atoms.iter().map(|a| a.0));
        for c in &self.cells {
            out.push(c.0);
            out.push(c.1);
        }
    }

    /// Mass of `[−1/2, x]` (`right = true`) or `[−1/2, x)`.
    fn cdf(&self, x: f64, right: bool) -> f64 {
        let k = if right {
            self.atoms.partition_point(|a| a.0 <= x)
        } else {
            self.atoms.partition_point(|a| a.0 < x)
        };
        let mut m: f64 = self.atoms[..k].iter().map(|a| a.1).sum();
        for &(lo, hi, mass) in &self.cells {
            if x >= hi {
                m += mass;
            } else if x > lo {
                m += mass * (x - lo) / (hi - lo);
            }
        }
        m
    }
}

/// `min_c ∫ |F_a − F_b − c|` over the circle, with the CDF difference
/// `D = F_a − F_b` piecewise linear between breakpoints.
fn exact_1d(a: &Pieces, b: &Pieces) -> f64 {
    let mut pts = vec![-0.5, 0.5];
    a.breakpoints(&mut pts);
    b.breakpoints(&mut pts);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    // segments (length, D at left end from the right, D at right end from the left)
    let segs: Vec<(f64, f64, f64)> = pts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let left = a.cdf(w[0], true) - b.cdf(w[0], true);
            let right = a.cdf(w[1], false) - b.cdf(w[1], false);
            (w[1] - w[0], left, right)
        })
        .collect();
    let measure_below = |c: f64| -> f64 {
        segs.iter()
            .map(|&(len, p, q)| {
                let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
                if hi == lo {
                    if lo < c {
                        len
                    } else {
                        0.0
                    }
                } else {
                    len * ((c - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            })
            .sum()
    };
    let total: f64 = segs.iter().map(|s| s.0).sum();
    let (mut lo, mut hi) = segs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.1).min(s.2), h.max(s.1).max(s.2)));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if measure_below(mid) < 0.5 * total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    segs.iter()
        .map(|&(len, p, q)| {
            let (u, v) = (p - c, q - c);
            if u * v >= 0.0 {
                0.5 * len * (u.abs() + v.abs())
            } else {
                0.5 * len * (u * u + v * v) / (u - v).abs()
            }
        })
        .sum()
}

fn assignment_points(m: Measure<'_>, seed: u64) -> Result<Vec<f64>> {
    match m {
        Measure::Cloud(c) => {
            let k = c.len().min(ASSIGNMENT_SAMPLES);
            if k == c.len() {
                return Ok(c.positions.clone());
            }
            // evenly strided subsample keeps the choice deterministic
            Ok((0..k).flat_map(|j| c.position(j * c.len() / k).to_vec()).collect())
        }
        Measure::Density(f) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(ParticleCloud::sample(f, ASSIGNMENT_SAMPLES, &mut rng)?.positions)
        }
    }
}

/// Mean torus distance of the optimal matching between equal-size clouds;
/// unequal sizes are matched after truncating to the smaller one.
fn assignment_distance(a: &[f64], b: &[f64], d: usize) -> f64 {
    let n = (a.len() / d).min(b.len() / d);
    let mut z = [0.0; MAX_DIM];
    let cost = |i: usize, j: usize, z: &mut [f64; MAX_DIM]| {
        for k in 0..d {
            z[k] = a[i * d + k] - b[j * d + k];
        }
        torus_norm(&z[..d])
    };
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = cost(i, j, &mut z);
        }
    }
    let assignment = hungarian(&m, n);
    assignment.iter().enumerate().map(|(i, &j)| m[i * n + j]).sum::<f64>() / n as f64
}

/// Minimum-cost perfect matching on an `n × n` matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{FourierMode, FourierSeries};

    fn cloud(xs: &[f64]) -> ParticleCloud {
        ParticleCloud::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn grid_interaction_matches_pairwise_sum() {
        let g = TorusGrid::new(1, 256).unwrap();
        let kernel = FourierSeries::new(0.0, vec![FourierMode::sin(0.2, &[1]), FourierMode::cos(-0.1, &[2])]);
        let grad_w = grid::gradient(&kernel.sample(&g)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = PAIRWISE_MAX + 88;
        let c = cloud(&(0..n).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<_>>());
        let fast = empirical_interaction(&c, &grad_w).unwrap();
        for i in (0..n).step_by(37) {
            let exact: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| kernel.gradient(&[wrap(c.position(i)[0] - c.position(j)[0])], 0))
                .sum::<f64>()
                / n as f64;
            assert!((fast[i] - exact).abs() < 2e-4, "{i}: {} vs {exact}", fast[i]);
        }
    }

    #[test]
    fn point_masses_are_at_torus_distance() {
        let a = cloud(&[0.1]);
        for (x, expect) in [(0.3, 0.2), (-0.45, 0.45), (0.45, 0.35), (-0.4, 0.5)] {
            let d = wasserstein1(Measure::Cloud(&a), Measure::Cloud(&cloud(&[x]))).unwrap();
            assert!((d.distance - expect).abs() < 1e-14, "{x}: {}", d.distance);
            assert!(d.exact);
        }
    }

    #[test]
    fn uniform_density_vs_itself_and_shift() {
        let g = TorusGrid::new(1, 32).unwrap();
        let u = ScalarField::constant(&g, 1.0);
        assert_eq!(wasserstein1(Measure::Density(&u), Measure::Density(&u)).unwrap().distance, 0.0);
        // a point mass against the uniform law: E|X − x| = 1/4
        let d = wasserstein1(Measure::Cloud(&cloud(&[0.2])), Measure::Density(&u)).unwrap();
        assert!((d.distance - 0.25).abs() < 1e-14);
    }

    #[test]
    fn mass_mismatch_is_an_error() {
        let g = TorusGrid::new(1, 16).unwrap();
        let half = ScalarField::constant(&g, 0.5);
        assert!(matches!(
            wasserstein1(Measure::Cloud(&cloud(&[0.0])), Measure::Density(&half)),
            Err(Error::MassMismatch(..))
        ));
    }

    #[test]
    fn hungarian_finds_optimal_matching() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let a = hungarian(&cost, 3);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn planar_estimate_of_translated_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<f64> = (0..200).flat_map(|_| [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5]).collect();
        let shifted: Vec<f64> = pts.chunks(2).flat_map(|p| [p[0] + 0.05, p[1]]).collect();
        let a = ParticleCloud::new(2, pts).unwrap();
        let b = ParticleCloud::new(2, shifted).unwrap();
        let w = wasserstein1(Measure::Cloud(&a), Measure::Cloud(&b)).unwrap();
        assert!(!w.exact);
        assert!(w.distance <= 0.05 + 1e-12);
        assert!(w.distance > 0.02);
    }

    #[test]
    fn deposit_conserves_mass_and_sampling_follows_cells() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = g.sample(|x| 1.0 + 0.5 * (2.0 * std::f64::consts::PI * x[0]).cos());
        let c = ParticleCloud::sample(&rho, 4000, &mut rng).unwrap();
        let m = c.deposit(&g).unwrap();
        assert!((grid::integrate(&m) - 1.0).abs() < 1e-12);
        let near_center = (0..c.len()).filter(|&i| c.position(i)[0].abs() < 0.25).count() as f64 / 4000.0;
        // ∫_{|x|<1/4} (1 + cos(2πx)/2) dx = 1/2 + 1/(2π)
        assert!((near_center - (0.5 + 1.0 / (2.0 * std::f64::consts::PI))).abs() < 0.03);
    }
}
