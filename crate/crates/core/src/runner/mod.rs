//! Configuration-driven runs: validation, solve, certification, cost,
//! particle checks and optimality probes, with everything persisted to a
//! run directory.
//!
//! Exit codes: `0` success, `2` configuration, `3` assumptions, `4` solver,
//! `5` certification.

pub mod config;
pub mod cost;
pub mod io;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixed_point::{certify, solve, Certification, LipschitzBudget};
use crate::fokker_planck::{control_gradients, DensityTrajectory};
use crate::hjb::{assemble_source, SourceAssembly, ValueTrajectory};
use crate::particles::{
    kinetic_energy_bound, simulate_mkv, verify_value_identity, wasserstein1, AdjointFlow, KineticBound, Measure,
    ParticleCloud, ValueIdentity,
};
use crate::problem::{validate_assumptions, AssumptionReport, ProblemSpec};

use config::{build_spec, load_config, LoadedConfig, ParticlesConfig, ProbePoint};
use cost::{evaluate_cost, optimality_probe, CostReport, ProbeReport, ProbeSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success = 0,
    Config = 2,
    Assumptions = 3,
    Solver = 4,
    Certification = 5,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

pub const MANIFEST_SCHEMA: u32 = 1;

/// Summary written to `manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub status: ExitStatus,
    pub exit_code: i32,
    pub error: Option<String>,
    pub config_sha256: String,
    pub dim: usize,
    pub n: usize,
    pub horizon: f64,
    pub steps: usize,
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub cfl_safety: f64,
    pub warnings: Vec<String>,
    pub assumptions: Option<AssumptionReport>,
    pub budget: Option<LipschitzBudget>,
    pub iterations: usize,
    pub converged: Option<bool>,
    pub final_residual: Option<f64>,
    pub certification: Option<Certification>,
    pub cost: Option<CostReport>,
    pub particles: Option<ParticleReport>,
}

impl Manifest {
    fn new(command: &str, loaded: &LoadedConfig) -> Self {
        let c = &loaded.config;
        let digest = Sha256::digest(loaded.text.as_bytes());
        Self {
            schema_version: MANIFEST_SCHEMA,
            command: command.into(),
            status: ExitStatus::Success,
            exit_code: 0,
            error: None,
            config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            dim: c.problem.dim,
            n: c.problem.n,
            horizon: c.problem.horizon,
            steps: c.problem.steps,
            theta: c.solver.theta,
            tol: c.solver.tol,
            max_iter: c.solver.max_iter,
            cfl_safety: c.solver.cfl_safety,
            warnings: Vec::new(),
            assumptions: None,
            budget: None,
            iterations: 0,
            converged: None,
            final_residual: None,
            certification: None,
            cost: None,
            particles: None,
        }
    }

    fn fail(&mut self, status: ExitStatus, error: Option<String>) {
        self.status = status;
        self.exit_code = status.code();
        if error.is_some() {
            self.error = error;
        }
    }
}

/// Result of one CLI command.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub status: ExitStatus,
    pub run_dir: Option<PathBuf>,
    pub manifest: Option<Manifest>,
    pub message: Option<String>,
}

impl RunResult {
    fn config_error(e: Error) -> Self {
        Self { status: ExitStatus::Config, run_dir: None, manifest: None, message: Some(e.to_string()) }
    }
}

/// Problem-construction errors that stem from a violated assumption rather
/// than a malformed configuration.
fn build_status(e: &Error) -> ExitStatus {
    match e {
        Error::Assumption { .. } | Error::MissingEstimate(_) => ExitStatus::Assumptions,
        _ => ExitStatus::Config,
    }
}

fn prepare(path: &Path) -> std::result::Result<(LoadedConfig, ProblemSpec, Vec<String>), Box<RunResult>> {
    let loaded = load_config(path).map_err(|e| Box::new(RunResult::config_error(e)))?;
    match build_spec(&loaded.config, &loaded.base_dir) {
        Ok((spec, warnings)) => Ok((loaded, spec, warnings)),
        Err(e) => {
            let status = build_status(&e);
            let mut manifest = Manifest::new("build", &loaded);
            manifest.fail(status, Some(e.to_string()));
            Err(Box::new(RunResult { status, run_dir: None, manifest: Some(manifest), message: Some(e.to_string()) }))
        }
    }
}

fn finish(dir: &Path, manifest: Manifest) -> RunResult {
    let status = manifest.status;
    let message = manifest.error.clone();
    if let Err(e) = io::write_json(&dir.join("manifest.json"), &manifest) {
        log::error!("cannot write manifest: {e}");
    }
    RunResult { status, run_dir: Some(dir.to_path_buf()), manifest: Some(manifest), message }
}

/// `validate <config>`: assumption report only, written to stdout by the CLI.
pub fn validate(path: &Path) -> RunResult {
    let (loaded, spec, warnings) = match prepare(path) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let report = validate_assumptions(&spec);
    let mut manifest = Manifest::new("validate", &loaded);
    manifest.warnings = warnings;
    if !report.all_passed() {
        manifest.fail(ExitStatus::Assumptions, Some("assumption check failed".into()));
    }
    manifest.assumptions = Some(report);
    RunResult { status: manifest.status, run_dir: None, message: manifest.error.clone(), manifest: Some(manifest) }
}

/// A config that parses but describes an invalid problem still gets a
/// manifest in its output directory.
fn persist_build_failure(path: &Path, result: RunResult) -> RunResult {
    let (Some(mut manifest), Ok(loaded)) = (result.manifest.clone(), load_config(path)) else {
        return result;
    };
    manifest.command = "solve".into();
    let dir = loaded.config.output.resolve();
    if fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("config.toml"), &loaded.text)).is_err() {
        return RunResult { manifest: Some(manifest), ..result };
    }
    finish(&dir, manifest)
}

/// `solve <config>`: validate → budget → solve → certify → cost → optional
/// particle checks, persisting diagnostics on every path.
pub fn run(path: &Path) -> RunResult {
    let (loaded, spec, warnings) = match prepare(path) {
        Ok(v) => v,
        Err(r) => return persist_build_failure(path, *r),
    };
    let config = &loaded.config;
    let dir = config.output.resolve();
    let mut manifest = Manifest::new("solve", &loaded);
    manifest.warnings = warnings;
    if let Err(e) = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("config.toml"), &loaded.text)) {
        manifest.fail(ExitStatus::Config, Some(format!("output directory {}: {e}", dir.display())));
        return RunResult { status: manifest.status, run_dir: None, message: manifest.error.clone(), manifest: Some(manifest) };
    }

    let report = validate_assumptions(&spec);
    let passed = report.all_passed();
    let _ = io::write_json(&dir.join("assumptions.json"), &report);
    manifest.assumptions = Some(report);
    if !passed {
        manifest.fail(ExitStatus::Assumptions, Some("assumption check failed".into()));
        return finish(&dir, manifest);
    }

    let outcome = match solve(&spec, config.solver.settings()) {
        Ok(o) => o,
        Err(e) => {
            let status = if matches!(e, Error::MissingEstimate(_)) { ExitStatus::Assumptions } else { ExitStatus::Solver };
            manifest.fail(status, Some(e.to_string()));
            return finish(&dir, manifest);
        }
    };
    manifest.budget = Some(outcome.budget);
    manifest.iterations = outcome.log.len();
    manifest.converged = Some(outcome.converged);
    manifest.final_residual = outcome.log.last().map(|r| r.residual);
    if let Err(e) = io::write_solution(&dir, &outcome, config.output.stride) {
        manifest.fail(ExitStatus::Solver, Some(format!("writing solution: {e}")));
        return finish(&dir, manifest);
    }
    if !outcome.converged {
        manifest.fail(ExitStatus::Solver, Some(format!("no convergence within {} iterations", config.solver.max_iter)));
        return finish(&dir, manifest);
    }

    match certify(&spec, &outcome) {
        Ok(c) => {
            if !c.passed {
                manifest.fail(ExitStatus::Certification, Some("certification failed".into()));
            }
            manifest.certification = Some(c);
        }
        Err(e) => manifest.fail(ExitStatus::Solver, Some(e.to_string())),
    }

    let cost = control_gradients(&outcome.value.frames)
        .and_then(|grads| evaluate_cost(&spec, &outcome.density, &grads));
    match cost {
        Ok(c) => {
            let _ = io::write_json(&dir.join("cost.json"), &c);
            manifest.cost = Some(c);
        }
        Err(e) => manifest.fail(ExitStatus::Solver, Some(e.to_string())),
    }

    if let Some(pc) = config.particles.as_ref().filter(|p| p.in_solve) {
        match particle_checks(&spec, &outcome.value, &outcome.density, &outcome.source, pc) {
            Ok((report, clouds)) => {
                let _ = write_particle_outputs(&dir, &report, &clouds);
                if !report.passed && manifest.status == ExitStatus::Success {
                    manifest.fail(ExitStatus::Certification, Some("particle checks failed".into()));
                }
                manifest.particles = Some(report);
            }
            Err(e) => manifest.fail(ExitStatus::Solver, Some(e.to_string())),
        }
    }
    finish(&dir, manifest)
}

/// Converged pair rebuilt from a run directory.
pub struct LoadedRun {
    pub value: ValueTrajectory,
    pub density: DensityTrajectory,
    pub source: SourceAssembly,
}

pub fn load_run(spec: &ProblemSpec, dir: &Path) -> Result<LoadedRun> {
    let stored = io::read_solution(dir)?;
    let control = control_gradients(&stored.control)?;
    let value = ValueTrajectory::from_frames(spec.mesh, stored.value)?;
    let density = DensityTrajectory::from_frames(spec.mesh, stored.density, spec.grad_w(), &control)?;
    if density.frames[0].grid() != &spec.grid {
        return Err(Error::GridMismatch("stored run uses a different grid".into()));
    }
    let source = assemble_source(spec, &density, &control)?;
    Ok(LoadedRun { value, density, source })
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub x: Vec<f64>,
    pub t: f64,
    pub zeta: ValueIdentity,
    pub eta: ValueIdentity,
    pub kinetic: KineticBound,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanFieldCheck {
    pub seed: u64,
    pub wasserstein1: f64,
    pub exact: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParticleReport {
    pub n: usize,
    pub identities: Vec<IdentityCheck>,
    pub mean_field: Vec<MeanFieldCheck>,
    pub passed: bool,
}

/// Largest accepted `|Φ − reconstruction|` below three standard errors.
pub const IDENTITY_FLOOR: f64 = 5e-2;
/// Largest accepted `d₁(empirical(T), ρ(T))`.
pub const MEAN_FIELD_LIMIT: f64 = 5e-2;

fn default_probes(spec: &ProblemSpec) -> Vec<ProbePoint> {
    let d = spec.grid.dim();
    let t = spec.mesh.horizon();
    [(0.0, 0.0), (0.25, 0.2 * t), (-0.3, 0.5 * t)]
        .iter()
        .map(|&(x, t)| {
            let mut p = vec![0.0; d];
            p[0] = x;
            ProbePoint { x: p, t }
        })
        .collect()
}

/// Value identities, kinetic bound and mean-field distance for a solution.
pub fn particle_checks(
    spec: &ProblemSpec,
    value: &ValueTrajectory,
    density: &DensityTrajectory,
    source: &SourceAssembly,
    cfg: &ParticlesConfig,
) -> Result<(ParticleReport, Vec<(u64, ParticleCloud)>)> {
    if cfg.n == 0 || cfg.seeds.is_empty() {
        return Err(Error::InvalidParameter("particle count and seed list must be nonempty".into()));
    }
    let probes = if cfg.probes.is_empty() { default_probes(spec) } else { cfg.probes.clone() };
    let seed = cfg.seeds[0];
    let mut identities = Vec::new();
    for p in &probes {
        let zeta = verify_value_identity(spec, value, source, AdjointFlow::Zeta, &p.x, p.t, cfg.n, seed)?;
        let eta = verify_value_identity(spec, value, source, AdjointFlow::Eta, &p.x, p.t, cfg.n, seed)?;
        let kinetic = kinetic_energy_bound(spec, value, source, &p.x, p.t, cfg.n, seed)?;
        let ok = |v: &ValueIdentity| v.residual.abs() <= (3.0 * v.reconstructed.stderr).max(IDENTITY_FLOOR);
        let passed = ok(&zeta) && ok(&eta) && kinetic.holds;
        identities.push(IdentityCheck { x: p.x.clone(), t: p.t, zeta, eta, kinetic, passed });
    }
    let mut mean_field = Vec::new();
    let mut clouds = Vec::new();
    for &s in &cfg.seeds {
        let frames = simulate_mkv(spec, value, cfg.n, s)?;
        let last = frames.into_iter().last().expect("at least the initial cloud");
        let w = wasserstein1(Measure::Cloud(&last), Measure::Density(density.last()))?;
        mean_field.push(MeanFieldCheck {
            seed: s,
            wasserstein1: w.distance,
            exact: w.exact,
            passed: w.distance <= MEAN_FIELD_LIMIT,
        });
        clouds.push((s, last));
    }
    let passed = identities.iter().all(|c| c.passed) && mean_field.iter().all(|c| c.passed);
    Ok((ParticleReport { n: cfg.n, identities, mean_field, passed }, clouds))
}

fn write_particle_outputs(dir: &Path, report: &ParticleReport, clouds: &[(u64, ParticleCloud)]) -> Result<()> {
    io::write_json(&dir.join("particles/report.json"), report)?;
    for (seed, cloud) in clouds {
        io::write_cloud_csv(&dir.join(format!("particles/cloud_seed{seed}_final.csv")), cloud)?;
    }
    Ok(())
}

/// `particles <config> --from <run-dir>`.
pub fn particles(path: &Path, from: &Path) -> RunResult {
    let (loaded, spec, warnings) = match prepare(path) {
        Ok(v) => v,
        Err(r) => return *r,
    };
    let mut manifest = Manifest::new("particles", &loaded);
    manifest.warnings = warnings;
    let run = match load_run(&spec, from) {
        Ok(r) => r,
        Err(e) => return RunResult::config_error(e),
    };
    let cfg = loaded.config.particles.clone().unwrap_or(ParticlesConfig {
        n: 10_000,
        seeds: vec![0],
        probes: Vec::new(),
        in_solve: false,
    });
    match particle_checks(&spec, &run.value, &run.density, &run.source, &cfg) {
        Ok((report, clouds)) => {
            if let Err(e) = write_particle_outputs(from, &report, &clouds) {
                manifest.fail(ExitStatus::Solver, Some(e.to_string()));
            } else if !report.passed {
                manifest.fail(ExitStatus::Certification, Some("particle checks failed".into()));
            }
            manifest.particles = Some(report);
        }
        Err(e) => manifest.fail(ExitStatus::Solver, Some(e.to_string())),
    }
    RunResult { status: manifest.status, run_dir: Some(from.to_path_buf()), message: manifest.error.clone(), manifest: Some(manifest) }
}

/// `probe <config> --from <run-dir>`; the report goes to `<run>/probe/report.json`.
pub fn probe(path: &Path, from: &Path) -> (RunResult, Option<ProbeReport>) {
    let (loaded, spec, warnings) = match prepare(path) {
        Ok(v) => v,
        Err(r) => return (*r, None),
    };
    let mut manifest = Manifest::new("probe", &loaded);
    manifest.warnings = warnings;
    let run = match load_run(&spec, from) {
        Ok(r) => r,
        Err(e) => return (RunResult::config_error(e), None),
    };
    let settings = ProbeSettings {
        seed: loaded.config.particles.as_ref().map_or(0, |p| p.seeds.first().copied().unwrap_or(0)),
        ..ProbeSettings::default()
    };
    let report = match optimality_probe(&spec, &run.value, &settings) {
        Ok(r) => r,
        Err(e) => {
            manifest.fail(ExitStatus::Solver, Some(e.to_string()));
            return (RunResult { status: manifest.status, run_dir: Some(from.to_path_buf()), message: manifest.error.clone(), manifest: Some(manifest) }, None);
        }
    };
    if let Err(e) = io::write_json(&from.join("probe/report.json"), &report) {
        manifest.fail(ExitStatus::Solver, Some(e.to_string()));
    } else if !report.passed {
        manifest.fail(ExitStatus::Certification, Some("optimality probe failed".into()));
    }
    let result = RunResult { status: manifest.status, run_dir: Some(from.to_path_buf()), message: manifest.error.clone(), manifest: Some(manifest) };
    (result, Some(report))
}
