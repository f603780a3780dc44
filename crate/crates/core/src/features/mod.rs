//! Feature vectors, extractors and the `PFV1` interchange file.

mod external;
mod pfv;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tiler::PreparedPatch;

pub use external::{ensure_backend, extract_external, BACKEND_FEATURE};
pub use pfv::{decode_features, encode_features, read_features, write_features, PFV_MAGIC};

/// Number of bins of the intensity histogram and LBP code histogram.
pub const HISTOGRAM_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub patch_id: String,
    pub label: Option<u32>,
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn new(patch_id: impl Into<String>, label: Option<u32>, values: Vec<f32>) -> Self {
        Self {
            patch_id: patch_id.into(),
            label,
            values,
        }
    }
}

/// Aligned feature vectors of one extractor. Every vector has `dim` finite
/// values and patch ids are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    extractor_id: String,
    dim: usize,
    vectors: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn new(
        extractor_id: impl Into<String>,
        dim: usize,
        vectors: Vec<FeatureVector>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("feature dimension must be at least 1".into()));
        }
        let mut ids = HashSet::with_capacity(vectors.len());
        for v in &vectors {
            if v.values.len() != dim {
                return Err(Error::Shape(format!(
                    "vector `{}` has {} values, set dimension is {dim}",
                    v.patch_id,
                    v.values.len()
                )));
            }
            if v.values.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "vector `{}` has a non-finite value",
                    v.patch_id
                )));
            }
            if !ids.insert(v.patch_id.as_str()) {
                return Err(Error::DuplicateId(v.patch_id.clone()));
            }
        }
        Ok(Self {
            extractor_id: extractor_id.into(),
            dim,
            vectors,
        })
    }

    pub fn extractor_id(&self) -> &str {
        &self.extractor_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn into_vectors(self) -> Vec<FeatureVector> {
        self.vectors
    }

    /// Scales every nonzero vector to unit Euclidean length.
    pub fn l2_normalized(mut self) -> Self {
        for v in &mut self.vectors {
            let norm = v
                .values
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                v.values
                    .iter_mut()
                    .for_each(|x| *x = (f64::from(*x) / norm) as f32);
            }
        }
        self
    }
}

/// A per-patch feature extractor.
pub trait Extractor: Send + Sync {
    /// Identifier recorded in feature files and models.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    fn extract(&self, patch: &PreparedPatch) -> Result<Vec<f32>>;
}

/// Normalized intensity histogram over the 256 8-bit levels.
#[derive(Debug, Clone, Copy, Default)]
pub struct HistogramExtractor;

impl Extractor for HistogramExtractor {
    fn id(&self) -> String {
        "histogram256".into()
    }

    fn dim(&self) -> usize {
        HISTOGRAM_BINS
    }

    fn extract(&self, patch: &PreparedPatch) -> Result<Vec<f32>> {
        Ok(extract_histogram(patch).values)
    }
}

/// Normalized histogram of 8-neighbour local binary pattern codes.
#[derive(Debug, Clone, Copy, Default)]
pub struct LbpExtractor;

impl Extractor for LbpExtractor {
    fn id(&self) -> String {
        "lbp8".into()
    }

    fn dim(&self) -> usize {
        HISTOGRAM_BINS
    }

    fn extract(&self, patch: &PreparedPatch) -> Result<Vec<f32>> {
        Ok(extract_lbp(patch)?.values)
    }
}

fn normalized_histogram(counts: &[u64; HISTOGRAM_BINS], total: u64) -> Vec<f32> {
    counts
        .iter()
        .map(|&c| (c as f64 / total as f64) as f32)
        .collect()
}

pub fn extract_histogram(patch: &PreparedPatch) -> FeatureVector {
    let mut counts = [0u64; HISTOGRAM_BINS];
    for level in patch.levels() {
        counts[level as usize] += 1;
    }
    let total = patch.values().len() as u64;
    FeatureVector::new(
        patch.patch_id.clone(),
        None,
        normalized_histogram(&counts, total),
    )
}

/// Neighbour offsets `(dy, dx)` in bit order: clockwise from the top-left.
pub const LBP_NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
];

/// Code of the pixel at `(y, x)`: bit k is set iff neighbour k is at least as
/// bright as the centre. Comparisons are made on 8-bit levels.
fn lbp_code(levels: &[u8], side: usize, y: usize, x: usize) -> u8 {
    let center = levels[y * side + x];
    LBP_NEIGHBORS
        .iter()
        .enumerate()
        .fold(0u8, |code, (bit, &(dy, dx))| {
            let ny = (y as isize + dy) as usize;
            let nx = (x as isize + dx) as usize;
            if levels[ny * side + nx] >= center {
                code | (1 << bit)
            } else {
                code
            }
        })
}

pub fn extract_lbp(patch: &PreparedPatch) -> Result<FeatureVector> {
    let side = patch.side();
    if side < 3 {
        return Err(Error::InvalidArgument(format!(
            "LBP needs a patch of side at least 3, got {side}"
        )));
    }
    let levels = patch.levels();
    let mut counts = [0u64; HISTOGRAM_BINS];
    for y in 1..side - 1 {
        for x in 1..side - 1 {
            counts[lbp_code(&levels, side, y, x) as usize] += 1;
        }
    }
    let total = ((side - 2) * (side - 2)) as u64;
    Ok(FeatureVector::new(
        patch.patch_id.clone(),
        None,
        normalized_histogram(&counts, total),
    ))
}

/// Runs `extractor` over `patches` in parallel, preserving input order.
/// `labels` is aligned with `patches`.
pub fn extract_set(
    extractor: &dyn Extractor,
    patches: &[PreparedPatch],
    labels: &[Option<u32>],
) -> Result<FeatureSet> {
    if labels.len() != patches.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} patches",
            labels.len(),
            patches.len()
        )));
    }
    let vectors = patches
        .par_iter()
        .zip(labels.par_iter())
        .map(|(p, &label)| {
            extractor
                .extract(p)
                .map(|values| FeatureVector::new(p.patch_id.clone(), label, values))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(extractor.id(), extractor.dim(), vectors)
}

/// Which extractor a pipeline run uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtractorSpec {
    Histogram,
    Lbp,
    /// Penultimate-layer activations of an ONNX model.
    ExternalModel {
        path: PathBuf,
    },
    /// Precomputed features read from a `PFV1` file.
    Import {
        path: PathBuf,
    },
}

impl ExtractorSpec {
    /// The in-process extractor, when there is one.
    pub fn handcrafted(&self) -> Option<Box<dyn Extractor>> {
        match self {
            ExtractorSpec::Histogram => Some(Box::new(HistogramExtractor)),
            ExtractorSpec::Lbp => Some(Box::new(LbpExtractor)),
            _ => None,
        }
    }
}

impl FromStr for ExtractorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let param = |rest: &str| {
            if rest.is_empty() {
                Err(Error::InvalidArgument(format!(
                    "extractor `{s}` needs a path"
                )))
            } else {
                Ok(PathBuf::from(rest))
            }
        };
        match s.split_once(':') {
            None if s == "histogram" => Ok(ExtractorSpec::Histogram),
            None if s == "lbp" => Ok(ExtractorSpec::Lbp),
            Some(("onnx" | "external", rest)) => {
                Ok(ExtractorSpec::ExternalModel { path: param(rest)? })
            }
            Some(("import", rest)) => Ok(ExtractorSpec::Import { path: param(rest)? }),
            _ => Err(Error::InvalidArgument(format!(
                "unknown extractor `{s}` (expected histogram, lbp, onnx:<model>, import:<file>)"
            ))),
        }
    }
}

impl fmt::Display for ExtractorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractorSpec::Histogram => f.write_str("histogram"),
            ExtractorSpec::Lbp => f.write_str("lbp"),
            ExtractorSpec::ExternalModel { path } => write!(f, "onnx:{}", path.display()),
            ExtractorSpec::Import { path } => write!(f, "import:{}", path.display()),
        }
    }
}
