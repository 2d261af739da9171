//! TOML run configuration. Unknown keys are rejected everywhere.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::SolverSettings;
use crate::grid::{self, ScalarField, TimeMesh, TorusGrid};
use crate::problem::{Coupling, FourierMode, FourierSeries, Potential, PotentialKind, ProblemSpec};
use crate::snapshot;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub particles: Option<ParticlesConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub n: usize,
    pub horizon: f64,
    pub steps: usize,
    pub potential: PotentialConfig,
    pub coupling: CouplingConfig,
    pub rho0: FieldConfig,
    pub phi_terminal: FieldConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeConfig {
    pub amplitude: f64,
    pub wave: Vec<i32>,
    #[serde(default)]
    pub phase: f64,
}

impl From<&ModeConfig> for FourierMode {
    fn from(m: &ModeConfig) -> Self {
        FourierMode { amplitude: m.amplitude, wave: m.wave.clone(), phase: m.phase }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    #[default]
    Binary,
    Csv,
}

/// A scalar field on the run grid.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Constant {
        value: f64,
    },
    Fourier {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        modes: Vec<ModeConfig>,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        format: FileFormat,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    Morse {
        c_a: f64,
        l_a: f64,
        c_r: f64,
        l_r: f64,
        smoothing: Option<f64>,
    },
    PowerLaw {
        a: f64,
        b: f64,
        smoothing: Option<f64>,
    },
    Trigonometric {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        modes: Vec<ModeConfig>,
        smoothing: Option<f64>,
    },
    Tabulated {
        path: PathBuf,
        #[serde(default)]
        format: FileFormat,
        smoothing: Option<f64>,
    },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    Constant { value: f64 },
    AdditiveNonlocal { v: FieldConfig, kernel: PotentialConfig },
    LocalPower { c1: f64, exponent: f64, cap: f64 },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Target CFL number for automatic substepping, in `(0, 1]`.
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    /// Additive slack in the envelope constant `A`.
    #[serde(default)]
    pub c0: f64,
}

fn default_theta() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    200
}
fn default_safety() -> f64 {
    1.0
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { theta: default_theta(), tol: default_tol(), max_iter: default_max_iter(), cfl_safety: 1.0, c0: 0.0 }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings { theta: self.theta, tol: self.tol, max_iterations: self.max_iter, c0: self.c0 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbePoint {
    pub x: Vec<f64>,
    pub t: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    #[serde(default = "default_particles")]
    pub n: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Start points of the adjoint-flow checks; three defaults when empty.
    #[serde(default)]
    pub probes: Vec<ProbePoint>,
    /// Run the particle checks as part of `solve`.
    #[serde(default)]
    pub in_solve: bool,
}

fn default_particles() -> usize {
    10_000
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Snapshot every `stride` mesh nodes (the last node is always written).
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_directory() -> PathBuf {
    PathBuf::from("runs/default")
}
fn default_stride() -> usize {
    64
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), stride: default_stride() }
    }
}

/// Environment variable that relocates all run directories.
pub const OUTPUT_ROOT_ENV: &str = "MFOC_OUTPUT_ROOT";

impl OutputConfig {
    /// Relative directories resolve against `$MFOC_OUTPUT_ROOT` or the working
    /// directory. With the variable set, absolute directories keep only their
    /// last component under the root.
    pub fn resolve(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => {
                let rel = if self.directory.is_absolute() {
                    self.directory.file_name().map(PathBuf::from).unwrap_or_default()
                } else {
                    self.directory.clone()
                };
                PathBuf::from(root).join(rel)
            }
            None => self.directory.clone(),
        }
    }
}

/// Parsed configuration plus the bytes it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let config = parse_config(&text)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(LoadedConfig { config, text, base_dir })
}

/// Largest `|mass − 1|` that is silently corrected.
pub const RENORMALIZE_LIMIT: f64 = 1e-2;

impl FieldConfig {
    pub fn build(&self, grid: &TorusGrid, base_dir: &Path) -> Result<ScalarField> {
        match self {
            FieldConfig::Constant { value } => Ok(ScalarField::constant(grid, *value)),
            FieldConfig::Fourier { constant, modes } => {
                let series = FourierSeries::new(*constant, modes.iter().map(FourierMode::from).collect());
                series.check_dim(grid.dim())?;
                Ok(series.sample(grid))
            }
            FieldConfig::File { path, format } => read_field(&base_dir.join(path), *format, grid),
        }
    }
}

fn read_field(path: &Path, format: FileFormat, grid: &TorusGrid) -> Result<ScalarField> {
    let file = fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let field = match format {
        FileFormat::Binary => snapshot::read_snapshot(BufReader::new(file))?,
        FileFormat::Csv => snapshot::read_csv(BufReader::new(file), grid)?,
    };
    if field.grid() != grid {
        return Err(Error::GridMismatch(format!("{} does not match the run grid", path.display())));
    }
    Ok(field)
}

impl PotentialConfig {
    pub fn build(&self, grid: &TorusGrid, base_dir: &Path) -> Result<Potential> {
        let (kind, smoothing) = match self {
            PotentialConfig::Morse { c_a, l_a, c_r, l_r, smoothing } => {
                (PotentialKind::Morse { c_a: *c_a, l_a: *l_a, c_r: *c_r, l_r: *l_r }, *smoothing)
            }
            PotentialConfig::PowerLaw { a, b, smoothing } => (PotentialKind::PowerLaw { a: *a, b: *b }, *smoothing),
            PotentialConfig::Trigonometric { constant, modes, smoothing } => (
                PotentialKind::Trigonometric(FourierSeries::new(*constant, modes.iter().map(FourierMode::from).collect())),
                *smoothing,
            ),
            PotentialConfig::Tabulated { path, format, smoothing } => {
                (PotentialKind::Tabulated(read_field(&base_dir.join(path), *format, grid)?), *smoothing)
            }
        };
        Ok(Potential { kind, smoothing })
    }
}

impl CouplingConfig {
    pub fn build(&self, grid: &TorusGrid, base_dir: &Path) -> Result<Coupling> {
        match self {
            CouplingConfig::Constant { value } => Ok(Coupling::constant(*value)),
            CouplingConfig::AdditiveNonlocal { v, kernel } => {
                Coupling::additive_nonlocal(v.build(grid, base_dir)?, kernel.build(grid, base_dir)?)
            }
            CouplingConfig::LocalPower { c1, exponent, cap } => Coupling::local_power(*c1, *exponent, *cap),
        }
    }
}

/// Builds the problem, renormalising `ρ₀` when its mass is off by at most
/// [`RENORMALIZE_LIMIT`]. Returns the spec and any warnings issued.
pub fn build_spec(config: &RunConfig, base_dir: &Path) -> Result<(ProblemSpec, Vec<String>)> {
    let p = &config.problem;
    let grid = TorusGrid::new(p.dim, p.n)?;
    let mesh = TimeMesh::new(p.horizon, p.steps)?;
    let mut warnings = Vec::new();
    let mut rho0 = p.rho0.build(&grid, base_dir)?;
    let mass = grid::integrate(&rho0);
    let off = (mass - 1.0).abs();
    if off > RENORMALIZE_LIMIT || !mass.is_finite() {
        return Err(Error::Config(format!("initial density has mass {mass}, expected 1")));
    }
    if off > 1e-12 {
        let msg = format!("initial density mass {mass:.15} renormalised to 1");
        log::warn!("{msg}");
        warnings.push(msg);
        rho0 = rho0.scale(1.0 / mass);
    }
    let phi_terminal = p.phi_terminal.build(&grid, base_dir)?;
    let potential = p.potential.build(&grid, base_dir)?;
    let coupling = p.coupling.build(&grid, base_dir)?;
    let mut spec = ProblemSpec::new(grid, mesh, potential, coupling, rho0, phi_terminal)?;
    if !(config.solver.cfl_safety > 0.0 && config.solver.cfl_safety <= 1.0) {
        return Err(Error::Config(format!("cfl_safety {} outside (0, 1]", config.solver.cfl_safety)));
    }
    spec.cfl_safety = config.solver.cfl_safety;
    warnings.extend(spec.potential_sample().warnings.iter().cloned());
    Ok((spec, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[problem]
dim = 1
n = 16
horizon = 0.25
steps = 8
potential = { kind = "trigonometric", modes = [{ amplitude = -0.1, wave = [1] }] }
coupling = { kind = "constant", value = 1.0 }
rho0 = { kind = "constant", value = 1.0 }
phi_terminal = { kind = "fourier", modes = [{ amplitude = 0.1, wave = [1] }] }
"#;

    #[test]
    fn minimal_config_builds() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.solver.theta, 0.5);
        let (spec, warnings) = build_spec(&c, Path::new(".")).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(spec.grid.n(), 16);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let typo = MINIMAL.replace("horizon", "horizn");
        assert!(matches!(parse_config(&typo), Err(Error::Config(_))));
        let extra = format!("{MINIMAL}\n[solver]\ntheta = 0.5\ntolerance = 1e-3\n");
        assert!(parse_config(&extra).is_err());
        let inner = MINIMAL.replace("value = 1.0 }\nrho0", "value = 1.0, scale = 2 }\nrho0");
        assert!(parse_config(&inner).is_err());
    }

    #[test]
    fn density_mass_is_renormalised_or_rejected() {
        let slight = MINIMAL.replace("rho0 = { kind = \"constant\", value = 1.0 }", "rho0 = { kind = \"constant\", value = 1.001 }");
        let (spec, warnings) = build_spec(&parse_config(&slight).unwrap(), Path::new(".")).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!((grid::integrate(&spec.rho0) - 1.0).abs() < 1e-14);
        let far = MINIMAL.replace("rho0 = { kind = \"constant\", value = 1.0 }", "rho0 = { kind = \"constant\", value = 1.5 }");
        assert!(build_spec(&parse_config(&far).unwrap(), Path::new(".")).is_err());
    }
}
