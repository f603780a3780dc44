//! Builds a manifest in memory, prints its class balance and a seeded
//! per-class sample.

use pathbench::dataset::{
    class_distribution, sample_per_class, DatasetManifest, PatchRecord, Split,
};

fn main() -> pathbench::Result<()> {
    let mut records = Vec::new();
    for class in 0..3u32 {
        for i in 0..(4 + 2 * class) {
            records.push(PatchRecord {
                patch_id: format!("s{class}_r0_c{i}"),
                class_id: class,
                split: Split::Train,
                grid_row: 0,
                grid_col: i,
                path: format!("patches/s{class}_r0_c{i}.png"),
            });
        }
        records.push(PatchRecord {
            patch_id: format!("t{class}_r0_c0"),
            class_id: class,
            split: Split::Test,
            grid_row: 0,
            grid_col: 0,
            path: format!("patches/t{class}_r0_c0.png"),
        });
    }
    let manifest = DatasetManifest::new([0, 1, 2, 3], records, ".")?;

    println!(
        "train per class: {:?}",
        class_distribution(&manifest, Split::Train)
    );
    println!(
        "test per class:  {:?}",
        class_distribution(&manifest, Split::Test)
    );

    let sampled = sample_per_class(&manifest, 5, 42)?;
    println!("\nsample of at most 5 per class (seed 42):");
    print!("{}", sampled.to_tsv());
    Ok(())
}
