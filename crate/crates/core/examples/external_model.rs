//! Extracts features with an ONNX network. Needs the `onnx` feature.
//!
//!     cargo run --features onnx --example external_model -- MODEL.onnx [SIDE]
//!
//! Without arguments it runs the small convolutional fixture shipped with the
//! tests, which takes 8x8 inputs.

use std::path::PathBuf;

use pathbench::features::extract_external;
use pathbench::rng::SeededRng;
use pathbench::synth::texture_patch;
use pathbench::tiler::prepare_pixels;

fn main() -> pathbench::Result<()> {
    let mut args = std::env::args_os().skip(1);
    let model = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny.onnx")
    });
    let side: usize = args
        .next()
        .and_then(|s| s.to_str().and_then(|s| s.parse().ok()))
        .unwrap_or(8);

    let mut rng = SeededRng::new(2);
    let patches = [3usize, 12, 20]
        .iter()
        .map(|&class| {
            let pixels = texture_patch(class, side * 4, 6.0, &mut rng);
            prepare_pixels(format!("tex{class:02}"), side * 4, &pixels, side)
        })
        .collect::<pathbench::Result<Vec<_>>>()?;

    let set = extract_external(&model, &patches)?;
    println!(
        "`{}` gives {}-dimensional features",
        set.extractor_id(),
        set.dim()
    );
    for v in set.vectors() {
        let head: Vec<String> = v
            .values
            .iter()
            .take(6)
            .map(|x| format!("{x:+.4}"))
            .collect();
        println!(
            "  {}: [{}{}]",
            v.patch_id,
            head.join(", "),
            if set.dim() > 6 { ", ..." } else { "" }
        );
    }
    Ok(())
}
