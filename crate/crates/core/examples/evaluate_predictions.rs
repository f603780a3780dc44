//! Scores a hand-written prediction set with the patch-to-scan, whole-scan
//! and total accuracies.

use pathbench::dataset::{DatasetManifest, PatchRecord, Split};
use pathbench::metrics::{report, EtaWMode, PredictionSet};

fn main() -> pathbench::Result<()> {
    // test patches per class: 2, 1, 1
    let truth = [("a", 0), ("b", 0), ("c", 1), ("d", 2)];
    let records = truth
        .iter()
        .map(|&(id, class)| PatchRecord {
            patch_id: id.to_string(),
            class_id: class,
            split: Split::Test,
            grid_row: 0,
            grid_col: 0,
            path: format!("{id}.png"),
        })
        .collect();
    let manifest = DatasetManifest::new([], records, ".")?;
    let predictions = PredictionSet::from_pairs(
        [("a", 0), ("b", 1), ("c", 1), ("d", 0)].map(|(id, c)| (id.to_string(), c)),
    )?;

    let per_class = report(&predictions, &manifest, EtaWMode::PerClassRecall)?;
    println!("{}", per_class.to_json());
    let literal = report(&predictions, &manifest, EtaWMode::Literal)?;
    println!("literal whole-scan accuracy: {:.4}", literal.eta_w);
    Ok(())
}
