//! Patch-to-scan, whole-scan and total accuracy.
//!
//! With `Γ_s` the test patches of class `s`, `N` the number of classes and
//! `n_tot` the number of test patches:
//!
//! * `eta_p = (1 / n_tot) Σ_s |correct in Γ_s|`
//! * `eta_w = (1 / N) Σ_s |correct in Γ_s| / |Γ_s|` (mean per-class recall)
//! * `eta_total = eta_p * eta_w`
//!
//! [`EtaWMode::Literal`] drops the `1 / |Γ_s|` factor. That variant is not
//! bounded by 1 and exists only to audit numbers computed that way.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};

/// Predicted class per test patch id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PredictionSet {
    entries: BTreeMap<String, u32>,
}

impl PredictionSet {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, u32)>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (id, class) in pairs {
            if entries.insert(id.clone(), class).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, patch_id: &str) -> Option<u32> {
        self.entries.get(patch_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by patch id.
    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.entries.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `patch_id <TAB> predicted_class` lines sorted by patch id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, class) in self.iter() {
            let _ = writeln!(out, "{id}\t{class}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: String| Error::Parse {
                line: idx + 1,
                message,
            };
            let (id, class) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `patch_id<TAB>predicted_class`".into()))?;
            let class = class
                .parse::<u32>()
                .map_err(|_| bad(format!("bad class id `{class}`")))?;
            pairs.push((id.to_string(), class));
        }
        Self::from_pairs(pairs)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Counts indexed `[true class][predicted class]`, classes in ascending id
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<u32>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: Vec<u32>) -> Self {
        let n = classes.len();
        Self {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn index_of(&self, class: u32) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    pub fn n_tot(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Correct predictions per class, i.e. the diagonal.
    pub fn correct(&self) -> Vec<u64> {
        (0..self.classes.len()).map(|i| self.counts[i][i]).collect()
    }

    /// `|Γ_s|` per class: row sums.
    pub fn gamma_sizes(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Confusion matrix of `preds` over the test split of `manifest`.
pub fn confusion(preds: &PredictionSet, manifest: &DatasetManifest) -> Result<ConfusionMatrix> {
    let mut m = ConfusionMatrix::zeros(manifest.classes().iter().copied().collect());
    let test: BTreeMap<&str, u32> = manifest
        .split(Split::Test)
        .map(|r| (r.patch_id.as_str(), r.class_id))
        .collect();
    for (id, predicted) in preds.iter() {
        let truth = *test
            .get(id)
            .ok_or_else(|| Error::UnknownPatch(id.to_string()))?;
        let col = m
            .index_of(predicted)
            .ok_or(Error::UnknownClass(predicted))?;
        let row = m
            .index_of(truth)
            .expect("manifest classes cover its records");
        m.counts[row][col] += 1;
    }
    let missing: Vec<String> = test
        .keys()
        .filter(|id| preds.get(id).is_none())
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompletePredictions(missing));
    }
    Ok(m)
}

/// Patch-to-scan accuracy: trace over `n_tot`.
pub fn eta_p(confusion: &ConfusionMatrix) -> Result<f64> {
    let n_tot = confusion.n_tot();
    if n_tot == 0 {
        return Err(Error::EmptyEvaluation);
    }
    Ok(confusion.correct().iter().sum::<u64>() as f64 / n_tot as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EtaWMode {
    /// Mean per-class recall.
    #[default]
    PerClassRecall,
    /// `(1 / N) Σ_s |correct in Γ_s|`, unnormalized per class.
    Literal,
}

/// Whole-scan accuracy over all classes of the matrix.
pub fn eta_w(confusion: &ConfusionMatrix, gamma_sizes: &[u64], mode: EtaWMode) -> Result<f64> {
    let n = confusion.classes.len();
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    if gamma_sizes.len() != n {
        return Err(Error::Shape(format!(
            "{} class sizes for {n} classes",
            gamma_sizes.len()
        )));
    }
    let correct = confusion.correct();
    let mut total = 0.0;
    for (i, (&hit, &size)) in correct.iter().zip(gamma_sizes).enumerate() {
        if size == 0 {
            return Err(Error::ZeroClassSize(confusion.classes[i]));
        }
        total += match mode {
            EtaWMode::PerClassRecall => hit as f64 / size as f64,
            EtaWMode::Literal => hit as f64,
        };
    }
    Ok(total / n as f64)
}

pub fn eta_total(eta_p: f64, eta_w: f64) -> f64 {
    eta_p * eta_w
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<u32>,
    pub confusion: Vec<Vec<u64>>,
    pub gamma_sizes: Vec<u64>,
    pub n_tot: u64,
    pub eta_p: f64,
    pub eta_w: f64,
    pub eta_total: f64,
}

impl EvalReport {
    /// Stable JSON: keys sorted, floats with 6 decimals, one confusion row
    /// per line.
    pub fn to_json(&self) -> String {
        let list = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(", ");
        let mut out = String::from("{\n");
        let _ = writeln!(
            out,
            "  \"classes\": [{}],",
            list(&mut self.classes.iter().map(u32::to_string))
        );
        out.push_str("  \"confusion\": [");
        for (i, row) in self.confusion.iter().enumerate() {
            let sep = if i + 1 == self.confusion.len() {
                ""
            } else {
                ","
            };
            let _ = write!(
                out,
                "\n    [{}]{sep}",
                list(&mut row.iter().map(u64::to_string))
            );
        }
        if !self.confusion.is_empty() {
            out.push_str("\n  ");
        }
        out.push_str("],\n");
        let _ = writeln!(out, "  \"eta_p\": {:.6},", self.eta_p);
        let _ = writeln!(out, "  \"eta_total\": {:.6},", self.eta_total);
        let _ = writeln!(out, "  \"eta_w\": {:.6},", self.eta_w);
        let _ = writeln!(
            out,
            "  \"gamma_sizes\": [{}],",
            list(&mut self.gamma_sizes.iter().map(u64::to_string))
        );
        let _ = writeln!(out, "  \"n_tot\": {}", self.n_tot);
        out.push_str("}\n");
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Full evaluation of `preds` against the test split of `manifest`.
pub fn report(
    preds: &PredictionSet,
    manifest: &DatasetManifest,
    mode: EtaWMode,
) -> Result<EvalReport> {
    let m = confusion(preds, manifest)?;
    let p = eta_p(&m)?;
    let gamma_sizes = m.gamma_sizes();
    let w = eta_w(&m, &gamma_sizes, mode)?;
    Ok(EvalReport {
        classes: m.classes.clone(),
        n_tot: m.n_tot(),
        gamma_sizes,
        eta_p: p,
        eta_w: w,
        eta_total: eta_total(p, w),
        confusion: m.counts,
    })
}
