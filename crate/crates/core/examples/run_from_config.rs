//! The configuration-driven pipeline used by the `mfoc` binary: solve,
//! then particle checks and the optimality probe read back from disk.
//!
//! `cargo run --example run_from_config -- [config.toml]`

use std::path::PathBuf;

use mfoc::runner;

fn main() {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/baseline.toml"));
    let dir = std::env::temp_dir().join("mfoc-example");
    std::env::set_var(runner::config::OUTPUT_ROOT_ENV, &dir);

    let solved = runner::run(&config);
    println!("solve: exit {}", solved.status.code());
    let Some(run_dir) = solved.run_dir else {
        println!("{}", solved.message.unwrap_or_default());
        return;
    };
    if let Some(m) = &solved.manifest {
        println!("  iterations {}, converged {:?}", m.iterations, m.converged);
        if let Some(c) = &m.cost {
            println!("  cost {:.6e} = running {:.6e} + terminal {:.6e}", c.total, c.running, c.terminal);
        }
    }
    let p = runner::particles(&config, &run_dir);
    println!("particles: exit {}", p.status.code());
    let (probe, _) = runner::probe(&config, &run_dir);
    println!("probe: exit {}", probe.status.code());
    println!("outputs in {}", run_dir.display());
}
