//! Forward solver on the pure heat equation, compared against the
//! single-mode closed form `1 + e^{-4π²t} cos(2πx)`.

use std::f64::consts::PI;

use mfoc::fokker_planck::fp_solve;
use mfoc::{TimeMesh, TorusGrid, VectorField};

fn main() -> mfoc::Result<()> {
    let grid = TorusGrid::new(1, 64)?;
    let mesh = TimeMesh::new(0.1, 512)?;
    let rho0 = grid.sample(|x| 1.0 + (2.0 * PI * x[0]).cos());
    let control = vec![VectorField::zeros(&grid); mesh.nodes()];
    let traj = fp_solve(&rho0, &VectorField::zeros(&grid), &control, &mesh)?;

    println!("{:>8} {:>12} {:>12}", "t", "sup error", "mass - 1");
    for k in (0..mesh.nodes()).step_by(128) {
        let t = mesh.time(k);
        let decay = (-4.0 * PI * PI * t).exp();
        let exact = grid.sample(|x| 1.0 + decay * (2.0 * PI * x[0]).cos());
        let err = traj.at(k).sub(&exact)?.max_abs();
        println!("{t:>8.4} {err:>12.3e} {:>12.3e}", traj.diagnostics[k].mass - 1.0);
    }
    println!("min density {:.4}, L2 Gronwall ratio {:.4}", traj.min_value(), traj.gronwall_ratio());
    Ok(())
}
