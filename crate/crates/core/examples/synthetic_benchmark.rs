//! Generates the 24-class texture dataset, runs the whole benchmark on it
//! and prints the report.
//!
//!     cargo run --release --example synthetic_benchmark -- [OUT_DIR]

use std::path::PathBuf;
use std::time::Instant;

use pathbench::pipeline::{run_bench, StageSettings};
use pathbench::synth::{write_texture_dataset, TextureDatasetSpec};

fn main() -> pathbench::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathbench-synthetic"));
    let spec = TextureDatasetSpec::default();
    let started = Instant::now();
    let manifest = write_texture_dataset(&out.join("data"), &spec)?;
    println!(
        "wrote {} patches of {} classes to {}",
        manifest.records().len(),
        spec.classes,
        out.join("data").display()
    );

    let settings = StageSettings {
        resize_to: spec.side,
        ..StageSettings::default()
    };
    let report = run_bench(&manifest, &settings, &out.join("run"))?;
    println!("{}", report.to_json());
    println!(
        "eta_p {:.4}  eta_w {:.4}  eta_total {:.4}  ({:.1?})",
        report.eta_p,
        report.eta_w,
        report.eta_total,
        started.elapsed()
    );
    Ok(())
}
