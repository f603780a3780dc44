//! `PSM1` model files: JSON with each weight row stored as base64 of its
//! little-endian f32 bytes, so floats survive the round trip bit for bit.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::LinearSvmModel;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "PSM1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    classes: Vec<u32>,
    dim: usize,
    #[serde(rename = "C")]
    c: f64,
    tol: f64,
    seed: u64,
    extractor_id: String,
    weights: Vec<String>,
}

fn encode_row(row: &[f32]) -> String {
    let bytes: Vec<u8> = row.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_row(text: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("weight row is not valid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Format(format!(
            "weight row holds {} bytes, not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect())
}

pub fn encode_model(model: &LinearSvmModel) -> Result<String> {
    model.validate()?;
    let file = ModelFile {
        format: MODEL_FORMAT.to_string(),
        classes: model.classes.clone(),
        dim: model.dim,
        c: model.c,
        tol: model.tol,
        seed: model.seed,
        extractor_id: model.extractor_id.clone(),
        weights: model.weights.iter().map(|r| encode_row(r)).collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn decode_model(text: &str) -> Result<LinearSvmModel> {
    let file: ModelFile = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("invalid model JSON: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::Format(format!(
            "model format `{}`, expected `{MODEL_FORMAT}`",
            file.format
        )));
    }
    let model = LinearSvmModel {
        classes: file.classes,
        dim: file.dim,
        weights: file
            .weights
            .iter()
            .map(|w| decode_row(w))
            .collect::<Result<_>>()?,
        c: file.c,
        tol: file.tol,
        seed: file.seed,
        extractor_id: file.extractor_id,
    };
    model.validate()?;
    Ok(model)
}

pub fn write_model(model: &LinearSvmModel, path: &Path) -> Result<()> {
    fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<LinearSvmModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_model(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> LinearSvmModel {
        LinearSvmModel {
            classes: vec![0, 4],
            dim: 2,
            weights: vec![vec![1.0, -0.0, f32::MIN_POSITIVE], vec![0.1, 1e-30, -7.5]],
            c: 0.1,
            tol: 1e-4,
            seed: u64::MAX,
            extractor_id: "lbp8".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let back = decode_model(&encode_model(&m).unwrap()).unwrap();
        assert_eq!(back.classes, m.classes);
        assert_eq!(back.seed, u64::MAX);
        assert_eq!(back.c.to_bits(), m.c.to_bits());
        for (a, b) in m.weights.iter().zip(&back.weights) {
            assert_eq!(
                a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn wire_fields() {
        let text = encode_model(&model()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["format"], "PSM1");
        assert_eq!(v["C"], 0.1);
        assert_eq!(v["dim"], 2);
        assert_eq!(v["weights"].as_array().unwrap().len(), 2);
        assert_eq!(
            v["weights"][0],
            STANDARD.encode(
                [1.0f32, -0.0, f32::MIN_POSITIVE]
                    .iter()
                    .flat_map(|x| x.to_le_bytes())
                    .collect::<Vec<_>>()
            )
        );
    }

    #[test]
    fn wrong_format_tag_rejected() {
        let text = encode_model(&model()).unwrap().replace("PSM1", "XSM1");
        assert!(matches!(decode_model(&text), Err(Error::Format(_))));
    }

    #[test]
    fn row_length_checked() {
        let mut m = model();
        m.weights[1].pop();
        assert!(encode_model(&m).is_err());
        let mut v: serde_json::Value =
            serde_json::from_str(&encode_model(&model()).unwrap()).unwrap();
        v["weights"][0] = serde_json::Value::String(STANDARD.encode([0u8; 8]));
        assert!(matches!(
            decode_model(&v.to_string()),
            Err(Error::Format(_))
        ));
    }
}
