//! Computes histogram and LBP features for a few texture patches and writes
//! them as a PFV1 file.
//!
//!     cargo run --example extract_features -- [OUT.pfv]

use std::path::PathBuf;

use pathbench::features::{
    extract_set, read_features, write_features, HistogramExtractor, LbpExtractor,
};
use pathbench::rng::SeededRng;
use pathbench::synth::texture_patch;
use pathbench::tiler::prepare_pixels;

fn main() -> pathbench::Result<()> {
    let out = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pathbench-lbp.pfv"));

    let mut rng = SeededRng::new(3);
    let mut patches = Vec::new();
    let mut labels = Vec::new();
    for class in [0usize, 5, 18] {
        for i in 0..2 {
            let pixels = texture_patch(class, 96, 8.0, &mut rng);
            patches.push(prepare_pixels(
                format!("tex{class:02}_{i}"),
                96,
                &pixels,
                48,
            )?);
            labels.push(Some(class as u32));
        }
    }

    let hist = extract_set(&HistogramExtractor, &patches, &labels)?;
    let lbp = extract_set(&LbpExtractor, &patches, &labels)?;
    for (h, l) in hist.vectors().iter().zip(lbp.vectors()) {
        let top = l
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(code, _)| code)
            .unwrap_or(0);
        let dark: f32 = h.values[..128].iter().sum();
        println!(
            "{:10} dark fraction {dark:.3}  most frequent LBP code {top:3}",
            h.patch_id
        );
    }

    write_features(&lbp, &out)?;
    let back = read_features(&out)?;
    println!(
        "\n{}: {} vectors of dim {} from `{}`",
        out.display(),
        back.len(),
        back.dim(),
        back.extractor_id()
    );
    Ok(())
}
