//! Run directory layout.
//!
//! ```text
//! <run>/manifest.json            summary, see the README for the schema
//! <run>/config.toml              verbatim copy of the input
//! <run>/assumptions.json
//! <run>/iterations.csv           k,residual,density_gap,envelope_margin,fixed_point_gap,envelope_ok
//! <run>/diagnostics/fp.csv       time,mass,min,l2,drift_sup
//! <run>/diagnostics/hjb.csv      time,sup,grad_sup,min_v
//! <run>/snapshots/{phi,rho}_<k>.mfoc   every `stride` nodes and the last one
//! <run>/solution/{phi,rho,control}.mfoc  full trajectories
//! <run>/cost.json
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed_point::{FixedPointOutcome, IterationRecord};
use crate::fokker_planck::DensityTrajectory;
use crate::grid::ScalarField;
use crate::hjb::ValueTrajectory;
use crate::particles::ParticleCloud;
use crate::snapshot;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_fp_csv(path: &Path, density: &DensityTrajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "time,mass,min,l2,drift_sup")?;
    for d in &density.diagnostics {
        writeln!(w, "{:e},{:e},{:e},{:e},{:e}", d.time, d.mass, d.min, d.l2, d.drift_sup)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_hjb_csv(path: &Path, value: &ValueTrajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "time,sup,grad_sup,min_v")?;
    for d in &value.diagnostics {
        writeln!(w, "{:e},{:e},{:e},{:e}", d.time, d.sup, d.grad_sup, d.min_v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations_csv(path: &Path, log: &[IterationRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "k,residual,density_gap,envelope_margin,fixed_point_gap,envelope_ok")?;
    for r in log {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{}",
            r.k, r.residual, r.density_gap, r.envelope_margin, r.fixed_point_gap, r.envelope_ok
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cloud_csv(path: &Path, cloud: &ParticleCloud) -> Result<()> {
    let mut w = create(path)?;
    let cols: Vec<String> = (0..cloud.dim()).map(|a| format!("x{a}")).collect();
    writeln!(w, "id,{}", cols.join(","))?;
    for i in 0..cloud.len() {
        let xs: Vec<String> = cloud.position(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{i},{}", xs.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn write_frames(path: &Path, frames: &[ScalarField]) -> Result<()> {
    let mut w = create(path)?;
    snapshot::write_trajectory(&mut w, frames)?;
    w.flush()?;
    Ok(())
}

fn read_frames(path: &Path) -> Result<Vec<ScalarField>> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    snapshot::read_trajectory(BufReader::new(f))
}

/// Writes iteration log, diagnostics, strided snapshots and full trajectories.
pub fn write_solution(dir: &Path, outcome: &FixedPointOutcome, stride: usize) -> Result<()> {
    write_iterations_csv(&dir.join("iterations.csv"), &outcome.log)?;
    write_fp_csv(&dir.join("diagnostics/fp.csv"), &outcome.density)?;
    write_hjb_csv(&dir.join("diagnostics/hjb.csv"), &outcome.value)?;
    let last = outcome.value.frames.len() - 1;
    let stride = stride.max(1);
    for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
        for (name, field) in [("phi", outcome.value.at(k)), ("rho", outcome.density.at(k))] {
            let mut w = create(&dir.join(format!("snapshots/{name}_{k:05}.mfoc")))?;
            snapshot::write_snapshot(&mut w, field)?;
            w.flush()?;
        }
    }
    write_frames(&dir.join("solution/phi.mfoc"), &outcome.value.frames)?;
    write_frames(&dir.join("solution/rho.mfoc"), &outcome.density.frames)?;
    write_frames(&dir.join("solution/control.mfoc"), &outcome.control)?;
    Ok(())
}

/// Full trajectories of a finished run.
#[derive(Clone, Debug)]
pub struct StoredSolution {
    pub value: Vec<ScalarField>,
    pub density: Vec<ScalarField>,
    pub control: Vec<ScalarField>,
}

pub fn read_solution(dir: &Path) -> Result<StoredSolution> {
    Ok(StoredSolution {
        value: read_frames(&dir.join("solution/phi.mfoc"))?,
        density: read_frames(&dir.join("solution/rho.mfoc"))?,
        control: read_frames(&dir.join("solution/control.mfoc"))?,
    })
}
