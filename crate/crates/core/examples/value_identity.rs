//! Reconstructs the value function from Monte Carlo adjoint paths and checks
//! the kinetic-energy bound along the optimally controlled flow.

use std::path::Path;

use mfoc::fixed_point::solve;
use mfoc::particles::{kinetic_energy_bound, verify_value_identity, AdjointFlow};
use mfoc::runner::config::{build_spec, load_config};

fn main() -> mfoc::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/baseline.toml");
    let loaded = load_config(&path)?;
    let (spec, _) = build_spec(&loaded.config, &loaded.base_dir)?;
    let out = solve(&spec, loaded.config.solver.settings())?;
    let n = 10_000;

    for (x0, t0) in [(0.0, 0.0), (0.25, 0.1), (-0.3, 0.25)] {
        println!("x0 = {x0}, t0 = {t0}");
        for flow in [AdjointFlow::Zeta, AdjointFlow::Eta] {
            let r = verify_value_identity(&spec, &out.value, &out.source, flow, &[x0], t0, n, 7)?;
            println!(
                "  {flow:?}: Phi = {:+.5}, reconstructed {:+.5} ± {:.1e}",
                r.direct, r.reconstructed.mean, r.reconstructed.stderr
            );
        }
        let k = kinetic_energy_bound(&spec, &out.value, &out.source, &[x0], t0, n, 7)?;
        println!("  kinetic energy {:.3e} <= {:.3} : {}", k.kinetic.mean, k.bound, k.holds);
    }
    Ok(())
}
