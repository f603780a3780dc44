//! Trains the one-vs-rest linear SVM on three Gaussian blobs, saves the model
//! and reports training accuracy.

use pathbench::features::{FeatureSet, FeatureVector};
use pathbench::rng::SeededRng;
use pathbench::svm::{encode_model, predict, train_ovr, SvmParams};

fn main() -> pathbench::Result<()> {
    let centres = [[0.0, 0.0], [4.0, 0.5], [1.5, 4.0]];
    let mut rng = SeededRng::new(1);
    let mut vectors = Vec::new();
    for (class, c) in centres.iter().enumerate() {
        for i in 0..40 {
            let values = c.iter().map(|m| (m + 0.6 * rng.normal()) as f32).collect();
            vectors.push(FeatureVector::new(
                format!("b{class}_{i:02}"),
                Some(class as u32),
                values,
            ));
        }
    }
    let set = FeatureSet::new("blobs", 2, vectors)?;

    let params = SvmParams {
        c: 1.0,
        ..SvmParams::default()
    };
    let (model, report) = train_ovr(&set, &params)?;
    for s in &report.per_class {
        println!(
            "class {}: {} epochs, max violation {:.1e}, duality gap {:.1e}",
            s.class_id, s.epochs, s.max_violation, s.duality_gap
        );
    }

    let predictions = predict(&model, &set)?;
    let correct = set
        .vectors()
        .iter()
        .filter(|v| predictions.get(&v.patch_id) == v.label)
        .count();
    println!("train accuracy {correct}/{}", set.len());
    println!("\n{}", encode_model(&model)?);
    Ok(())
}
