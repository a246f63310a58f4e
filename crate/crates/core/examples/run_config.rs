//! Drive the `solve` pipeline from a config file, as the binary does.
//!
//! `cargo run --example run_config -- configs/gbm.json /tmp/apfx-gbm`

use std::path::PathBuf;

use apfx::cli::cmd_solve;
use apfx::config::ExperimentConfig;

fn main() -> apfx::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/gbm.json"));
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.output_dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("apfx-run-config"));
    let status = cmd_solve(&cfg)?;
    println!("{status:?}; artifacts in {}", cfg.output_dir.display());
    for entry in std::fs::read_dir(&cfg.output_dir)? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    Ok(())
}
