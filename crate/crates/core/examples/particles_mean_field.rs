//! Interacting particles driven by the computed feedback, compared with the
//! grid density at the horizon in Wasserstein-1.

use std::path::Path;

use mfoc::fixed_point::solve;
use mfoc::particles::{simulate_mkv, wasserstein1, Measure};
use mfoc::runner::config::{build_spec, load_config};

fn main() -> mfoc::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/baseline.toml");
    let loaded = load_config(&path)?;
    let (spec, _) = build_spec(&loaded.config, &loaded.base_dir)?;
    let out = solve(&spec, loaded.config.solver.settings())?;
    let target = out.density.last();

    println!("{:>6} {:>30}", "N", "d1(empirical(T), rho(T)) per seed");
    for n in [100, 1_000, 10_000] {
        let mut row = Vec::new();
        for seed in 0..5 {
            let clouds = simulate_mkv(&spec, &out.value, n, seed)?;
            let w = wasserstein1(Measure::Cloud(clouds.last().expect("nonempty")), Measure::Density(target))?;
            row.push(format!("{:.2e}", w.distance));
        }
        println!("{n:>6} {}", row.join(" "));
    }
    Ok(())
}
