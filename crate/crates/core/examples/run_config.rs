//! Runs an experiment from a JSON config, the same way the `twoscale` binary does.
//!
//! Usage: `cargo run --example run_config [config.json]`

use twoscale::experiment::{run, ExperimentConfig};

const DEFAULT: &str = r#"{
    "command": "ym",
    "epsilon_list": [0.25, 0.125],
    "generator": {
        "kind": "periodic_cell",
        "integrand": {"kind": "laminate", "a": [1.0, 4.0]},
        "matrix": [1.0],
        "dim": 1,
        "t": 1,
        "cells_per_unit": 16
    },
    "binning": {"x_bins": 2, "y_bins": 8},
    "output": "out/run_config"
}"#;

fn main() -> twoscale::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::from_json_str(DEFAULT)?,
    };
    let summary = run(&config)?;
    println!("{}", summary.message.trim_end());
    println!(
        "files in {}: {}",
        summary.output.display(),
        summary.files.join(", ")
    );
    Ok(())
}
