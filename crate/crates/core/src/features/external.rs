//! Deep features from an exported network, run in-process with `tract`.
//!
//! The model takes one prepared patch per forward pass. Grayscale values are
//! fed unchanged in `[0, 1]` and replicated across the model's channels; any
//! network-specific normalization is expected to be part of the exported
//! graph. The first model output, flattened, is the feature vector.

use std::path::Path;

use super::FeatureSet;
#[cfg(feature = "onnx")]
use super::FeatureVector;
use crate::error::{Error, Result};
use crate::tiler::PreparedPatch;

/// Cargo feature that compiles the inference backend in.
pub const BACKEND_FEATURE: &str = "onnx";

/// Fails with `BackendUnavailable` unless the backend is compiled in.
pub fn ensure_backend() -> Result<()> {
    if cfg!(feature = "onnx") {
        Ok(())
    } else {
        Err(Error::BackendUnavailable(format!(
            "inference backend not compiled in; rebuild with `--features {BACKEND_FEATURE}`"
        )))
    }
}

/// Runs the model at `model_path` over `patches`, preserving order.
/// Labels are left unset.
#[cfg(not(feature = "onnx"))]
pub fn extract_external(model_path: &Path, patches: &[PreparedPatch]) -> Result<FeatureSet> {
    let _ = patches;
    Err(Error::BackendUnavailable(format!(
        "cannot run `{}`: inference backend not compiled in; rebuild with `--features {BACKEND_FEATURE}`",
        model_path.display()
    )))
}

#[cfg(feature = "onnx")]
pub fn extract_external(model_path: &Path, patches: &[PreparedPatch]) -> Result<FeatureSet> {
    use tract_onnx::prelude::*;

    if !model_path.is_file() {
        return Err(Error::io(
            model_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found"),
        ));
    }
    let extractor_id = format!(
        "onnx:{}",
        model_path
            .file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default()
    );
    let Some(first) = patches.first() else {
        return Err(Error::InvalidArgument(
            "no patches given; the output dimension of the model is unknown".into(),
        ));
    };
    let side = first.side();
    if let Some(p) = patches.iter().find(|p| p.side() != side) {
        return Err(Error::Shape(format!(
            "patch `{}` has side {}, expected {side}",
            p.patch_id,
            p.side()
        )));
    }

    #[derive(Clone, Copy, Debug)]
    enum Layout {
        Nchw(usize),
        Nhwc(usize),
    }

    let load = || {
        tract_onnx::onnx()
            .model_for_path(model_path)
            .map_err(|e| Error::Format(format!("{}: {e}", model_path.display())))
    };
    let mut plan = None;
    let mut last_err = String::new();
    for layout in [
        Layout::Nchw(3),
        Layout::Nhwc(3),
        Layout::Nchw(1),
        Layout::Nhwc(1),
    ] {
        let shape = match layout {
            Layout::Nchw(c) => [1, c, side, side],
            Layout::Nhwc(c) => [1, side, side, c],
        };
        let attempt = load()?
            .with_input_fact(0, f32::fact(shape).into())
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable());
        match attempt {
            Ok(runnable) => {
                plan = Some((layout, runnable));
                break;
            }
            Err(e) => last_err = format!("{e:?}"),
        }
    }
    let (layout, runnable) = plan.ok_or_else(|| {
        Error::Shape(format!(
            "model does not accept a {side}x{side} input in NCHW or NHWC layout: {last_err}"
        ))
    })?;
    log::info!("running {extractor_id} with input layout {layout:?}");

    let mut vectors = Vec::with_capacity(patches.len());
    let mut dim = None;
    for patch in patches {
        let values = patch.values();
        let input: Tensor = match layout {
            Layout::Nchw(c) => {
                tract_ndarray::Array4::from_shape_fn((1, c, side, side), |(_, _, y, x)| {
                    values[y * side + x]
                })
                .into()
            }
            Layout::Nhwc(c) => {
                tract_ndarray::Array4::from_shape_fn((1, side, side, c), |(_, y, x, _)| {
                    values[y * side + x]
                })
                .into()
            }
        };
        let outputs = runnable.run(tvec!(input.into())).map_err(|e| {
            Error::Shape(format!("forward pass on `{}` failed: {e}", patch.patch_id))
        })?;
        let out = outputs
            .first()
            .ok_or_else(|| Error::Shape("model produced no output".into()))?
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Shape(format!("model output is not f32: {e}")))?;
        let features: Vec<f32> = out.iter().copied().collect();
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape(format!(
                "model output for `{}` is not finite; is a {side}x{side} input too small for it?",
                patch.patch_id
            )));
        }
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(Error::Shape(format!(
                    "output size changed from {d} to {} on `{}`",
                    features.len(),
                    patch.patch_id
                )))
            }
            _ => {}
        }
        vectors.push(FeatureVector::new(patch.patch_id.clone(), None, features));
    }
    FeatureSet::new(extractor_id, dim.unwrap_or(0), vectors)
}


#[cfg(all(test, feature = "onnx"))]
mod onnx_tests {
    use std::path::PathBuf;

    use super::*;

    fn fixture(name: &str) -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("tests/fixtures")
            .join(name)
    }

    #[test]
    fn matches_reference_outputs() {
        let expected: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(fixture("tiny_expected.json")).unwrap())
                .unwrap();
        let side = expected["side"].as_u64().unwrap() as usize;
        let values: Vec<f32> = expected["levels"]
            .as_array()
            .unwrap()
            .iter()
            .map(|l| l.as_f64().unwrap() as f32 / 255.0)
            .collect();
        let a = PreparedPatch::new("ramp_a", side, values.clone()).unwrap();
        let b = PreparedPatch::new("ramp_b", side, values).unwrap();
        let set = extract_external(&fixture("tiny.onnx"), &[a, b]).unwrap();
        assert_eq!(set.extractor_id(), "onnx:tiny.onnx");
        let want: Vec<f64> = expected["features"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(set.dim(), want.len());
        for v in set.vectors() {
            for (got, want) in v.values.iter().zip(&want) {
                assert!((f64::from(*got) - want).abs() < 1e-5, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn input_smaller_than_kernel_is_a_shape_error() {
        let patch = PreparedPatch::new("tiny", 2, vec![0.5; 4]).unwrap();
        let result = extract_external(&fixture("tiny.onnx"), &[patch]);
        assert!(matches!(result, Err(Error::Shape(_))), "{result:?}");
    }

    #[test]
    fn pooled_model_accepts_other_sides() {
        let patch = PreparedPatch::new("p", 12, vec![0.25; 144]).unwrap();
        assert_eq!(
            extract_external(&fixture("tiny.onnx"), &[patch])
                .unwrap()
                .dim(),
            4
        );
    }

    #[test]
    fn missing_model_is_io_error() {
        let patch = PreparedPatch::new("p", 8, vec![0.5; 64]).unwrap();
        let err = extract_external(Path::new("/nonexistent/model.onnx"), &[patch]).unwrap_err();
        assert!(err.to_string().contains("model.onnx"));
    }
}
