//! Exact k-nearest-neighbour search over texture LBP features, with the
//! majority-vote classification that goes with it.

use pathbench::features::{extract_set, LbpExtractor};
use pathbench::retrieval::{classify_knn, neighbors_tsv, Metric, RetrievalIndex};
use pathbench::rng::SeededRng;
use pathbench::synth::texture_patch;
use pathbench::tiler::prepare_pixels;

fn main() -> pathbench::Result<()> {
    let classes = [1usize, 9, 14, 22];
    let mut rng = SeededRng::new(5);
    let mut make = |prefix: &str, per_class: usize| -> pathbench::Result<_> {
        let mut patches = Vec::new();
        let mut labels = Vec::new();
        for &class in &classes {
            for i in 0..per_class {
                let pixels = texture_patch(class, 64, 10.0, &mut rng);
                patches.push(prepare_pixels(
                    format!("{prefix}{class:02}_{i}"),
                    64,
                    &pixels,
                    64,
                )?);
                labels.push(Some(class as u32));
            }
        }
        extract_set(&LbpExtractor, &patches, &labels)
    };
    let indexed = make("idx", 8)?;
    let queries = make("qry", 2)?;

    let index = RetrievalIndex::build(&indexed, Metric::Euclidean)?;
    let results = index.query_all(&queries, 3)?;
    print!("{}", neighbors_tsv(&results[..2]));

    let predictions = classify_knn(&index, &queries, 3)?;
    let correct = queries
        .vectors()
        .iter()
        .filter(|v| predictions.get(&v.patch_id) == v.label)
        .count();
    println!("\n3-NN accuracy on {} queries: {correct}", queries.len());
    Ok(())
}
