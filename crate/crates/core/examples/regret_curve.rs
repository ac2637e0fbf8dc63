//! Runs a config file through the experiment runner and prints the report.
//!
//! `cargo run --release --example regret_curve -- crates/core/examples/configs/quick.toml`

use std::path::PathBuf;

use offline_lcb::eval::{report, run_experiment, ExperimentConfig, OUTPUT_ENV};

fn main() -> offline_lcb::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/quick.toml"));
    let cfg = ExperimentConfig::load(&path)?;
    let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from);
    let out = cfg.output_dir(Some(root.as_deref().unwrap_or(&std::env::temp_dir())));
    let result = run_experiment(&cfg, &out)?;
    println!("{} jobs written to {}\n", result.jobs.len(), result.dir.display());
    print!("{}", report(&out)?);
    Ok(())
}
