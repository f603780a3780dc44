//! Runs the benchmark on precomputed features, the way features exported
//! from a deep network enter the pipeline. The "deep" features here are
//! stand-ins: noisy one-hot class codes written as a PFV1 file.

use std::path::PathBuf;

use pathbench::dataset::{DatasetManifest, PatchRecord, Split};
use pathbench::features::{write_features, ExtractorSpec, FeatureSet, FeatureVector};
use pathbench::pipeline::{run_bench, StageSettings};
use pathbench::rng::SeededRng;

fn main() -> pathbench::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathbench-import"));
    std::fs::create_dir_all(&dir).map_err(|e| pathbench::Error::Io {
        path: dir.clone(),
        source: e,
    })?;

    let (classes, dim) = (6u32, 32usize);
    let mut rng = SeededRng::new(9);
    let mut records = Vec::new();
    let mut vectors = Vec::new();
    for class in 0..classes {
        for i in 0..12u32 {
            let split = if i < 9 { Split::Train } else { Split::Test };
            let id = format!("c{class}_{split}_{i:02}");
            let values = (0..dim)
                .map(|j| (f64::from(u8::from(j == class as usize)) + 0.3 * rng.normal()) as f32)
                .collect();
            vectors.push(FeatureVector::new(id.clone(), None, values));
            records.push(PatchRecord {
                path: format!("patches/{id}.png"),
                patch_id: id,
                class_id: class,
                split,
                grid_row: 0,
                grid_col: i,
            });
        }
    }
    let pfv = dir.join("deep.pfv");
    write_features(&FeatureSet::new("stand-in-deep", dim, vectors)?, &pfv)?;
    let manifest = DatasetManifest::new([], records, &dir)?;

    let settings = StageSettings {
        extractor: ExtractorSpec::Import { path: pfv },
        sample_n: 9,
        ..StageSettings::default()
    };
    let report = run_bench(&manifest, &settings, &dir.join("run"))?;
    println!(
        "eta_p {:.4}  eta_w {:.4}  eta_total {:.4}",
        report.eta_p, report.eta_w, report.eta_total
    );
    println!("artifacts in {}", dir.join("run").display());
    Ok(())
}
