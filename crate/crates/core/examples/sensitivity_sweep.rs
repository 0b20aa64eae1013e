//! Sweeps the discrepancy weight eta on the seconds-scale toy config and
//! prints the resulting table.
//!
//! ```text
//! cargo run --release --example sensitivity_sweep -- [out_dir]
//! ```

use std::path::PathBuf;

use agfa::cli::cmd_sweep;
use agfa::config::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/examples/sweep".into()));
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let base = TrainConfig::load(&path)?;
    let values = [0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0];
    let table = cmd_sweep(&base, "eta", &values, &[0, 1, 2], &out, false)?;
    print!("{}", table.to_csv());
    Ok(())
}
