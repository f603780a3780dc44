//! Tiles a synthetic bright-field scan and lists the kept patches.
//!
//!     cargo run --example tile_scan -- [OUT_DIR]

use std::path::PathBuf;

use pathbench::synth::synthetic_scan;
use pathbench::tiler::{prepare, select_patches, tile_grid, tile_scan, TilerConfig};

fn main() -> pathbench::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathbench-tiles"));

    let scan = synthetic_scan("scan01", 2400, 1600, 7, 2, 11)?;
    let config = TilerConfig {
        patch_size: 400,
        resize_to: 100,
        ..TilerConfig::default()
    };
    let grid = tile_grid(scan.width(), scan.height(), config.patch_size);
    println!("{} grid cells of {} px", grid.len(), config.patch_size);

    for p in select_patches(&scan, &config)? {
        println!("  kept {}  background {:.3}", p.patch_id(), p.homogeneity);
    }

    let written = tile_scan(&scan, &config, &out)?;
    println!("wrote {} patches to {}", written.len(), out.display());
    if let Some(first) = written.first() {
        let prepared = prepare(&first.patch, config.resize_to)?;
        let mean = prepared.values().iter().sum::<f32>() / prepared.values().len() as f32;
        println!(
            "{} prepared to {}x{}, mean {mean:.3}",
            prepared.patch_id,
            prepared.side(),
            prepared.side()
        );
    }
    Ok(())
}
