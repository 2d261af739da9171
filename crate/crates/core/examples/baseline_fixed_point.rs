//! Damped fixed-point solve of the reference problem in `configs/baseline.toml`,
//! followed by certification against the a priori estimates.

use std::path::Path;

use mfoc::fixed_point::{certify, solve};
use mfoc::runner::config::{build_spec, load_config};

fn main() -> mfoc::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/baseline.toml");
    let loaded = load_config(&path)?;
    let (spec, _) = build_spec(&loaded.config, &loaded.base_dir)?;
    let out = solve(&spec, loaded.config.solver.settings())?;

    let b = &out.budget;
    println!("budget: A = {:.4}, B = {:.4}, C = A e^(BT) = {:.4}", b.a, b.b, b.c);
    println!("{:>3} {:>11} {:>11} {:>9}", "k", "residual", "rho gap", "margin");
    for r in &out.log {
        println!("{:>3} {:>11.3e} {:>11.3e} {:>9.4}", r.k, r.residual, r.density_gap, r.envelope_margin);
    }
    println!("converged: {}", out.converged);

    let c = certify(&spec, &out)?;
    println!("self-consistency   {:.2e}", c.self_consistency);
    println!("damping neutrality {:.2e}", c.damping_neutrality);
    println!("sup |Phi| {:.4} <= C {:.4}", c.sup_value, c.sup_bound);
    println!("mass drift {:.1e}, min density {:.4}", c.mass_drift, c.min_density);
    println!("certified: {}", c.passed);
    Ok(())
}
