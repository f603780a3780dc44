//! Stage glue shared by the command line and the examples: loading patch
//! files, producing labelled feature sets and the full benchmark run.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::{sample_per_class, DatasetManifest, PatchRecord, Split};
use crate::error::{Error, Result};
use crate::features::{
    ensure_backend, extract_external, extract_set, read_features, write_features, ExtractorSpec,
    FeatureSet, FeatureVector,
};
use crate::metrics::{report, EtaWMode, EvalReport};
use crate::svm::{predict, train_ovr, write_model, SvmParams};
use crate::tiler::{load_patch, prepare_pixels, PreparedPatch};

/// Settings consumed by the extraction, training and evaluation stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSettings {
    pub extractor: ExtractorSpec,
    pub resize_to: usize,
    pub l2_normalize: bool,
    pub svm: SvmParams,
    pub sample_n: usize,
    pub sample_seed: u64,
    pub eta_w_mode: EtaWMode,
}

impl Default for StageSettings {
    fn default() -> Self {
        Self {
            extractor: ExtractorSpec::Lbp,
            resize_to: 224,
            l2_normalize: false,
            svm: SvmParams::default(),
            sample_n: 100,
            sample_seed: 42,
            eta_w_mode: EtaWMode::PerClassRecall,
        }
    }
}

/// Loads and prepares the patch file of every record, in record order.
pub fn prepare_records(
    manifest: &DatasetManifest,
    records: &[&PatchRecord],
    resize_to: usize,
) -> Result<Vec<PreparedPatch>> {
    records
        .par_iter()
        .map(|r| {
            let path = manifest.resolve(r);
            let (side, pixels) = load_patch(&path)?;
            prepare_pixels(r.patch_id.clone(), side, &pixels, resize_to)
        })
        .collect()
}

/// Feature set for the records of `split` (all records when `None`),
/// labelled from the manifest, in manifest order.
pub fn extract_features(
    manifest: &DatasetManifest,
    split: Option<Split>,
    settings: &StageSettings,
) -> Result<FeatureSet> {
    let records: Vec<&PatchRecord> = manifest
        .records()
        .iter()
        .filter(|r| split.is_none_or(|s| r.split == s))
        .collect();
    let labels: Vec<Option<u32>> = records.iter().map(|r| Some(r.class_id)).collect();
    let set = match &settings.extractor {
        ExtractorSpec::Import { path } => select_imported(&read_features(path)?, &records)?,
        ExtractorSpec::ExternalModel { path } => {
            ensure_backend()?;
            let patches = prepare_records(manifest, &records, settings.resize_to)?;
            let raw = extract_external(path, &patches)?;
            relabel(raw, &labels)?
        }
        spec => {
            let extractor = spec.handcrafted().expect("handcrafted extractor");
            let patches = prepare_records(manifest, &records, settings.resize_to)?;
            extract_set(extractor.as_ref(), &patches, &labels)?
        }
    };
    Ok(if settings.l2_normalize {
        set.l2_normalized()
    } else {
        set
    })
}

fn relabel(set: FeatureSet, labels: &[Option<u32>]) -> Result<FeatureSet> {
    let id = set.extractor_id().to_string();
    let dim = set.dim();
    let vectors = set
        .into_vectors()
        .into_iter()
        .zip(labels)
        .map(|(v, &label)| FeatureVector { label, ..v })
        .collect();
    FeatureSet::new(id, dim, vectors)
}

/// Picks the vectors of `records` out of an imported feature file, in record
/// order, taking labels from the manifest.
fn select_imported(imported: &FeatureSet, records: &[&PatchRecord]) -> Result<FeatureSet> {
    let by_id: HashMap<&str, &FeatureVector> = imported
        .vectors()
        .iter()
        .map(|v| (v.patch_id.as_str(), v))
        .collect();
    let vectors = records
        .iter()
        .map(|r| {
            let v = by_id.get(r.patch_id.as_str()).ok_or_else(|| {
                Error::InvalidData(format!(
                    "imported features have no vector for `{}`",
                    r.patch_id
                ))
            })?;
            if let Some(l) = v.label.filter(|&l| l != r.class_id) {
                log::warn!(
                    "`{}`: imported label {l} differs from manifest class {}; using the manifest",
                    r.patch_id,
                    r.class_id
                );
            }
            Ok(FeatureVector::new(
                r.patch_id.clone(),
                Some(r.class_id),
                v.values.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::new(imported.extractor_id(), imported.dim(), vectors)
}

/// Files written by [`run_bench`], all inside the output directory.
#[derive(Debug, Clone)]
pub struct BenchArtifacts {
    pub sampled_manifest: PathBuf,
    pub train_features: PathBuf,
    pub test_features: PathBuf,
    pub model: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
}

impl BenchArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            sampled_manifest: dir.join("sampled.tsv"),
            train_features: dir.join("train.pfv"),
            test_features: dir.join("test.pfv"),
            model: dir.join("model.json"),
            predictions: dir.join("predictions.tsv"),
            report: dir.join("report.json"),
        }
    }
}

/// sample -> extract -> train -> classify -> evaluate, writing every
/// intermediate artifact to `out_dir`.
pub fn run_bench(
    manifest: &DatasetManifest,
    settings: &StageSettings,
    out_dir: &Path,
) -> Result<EvalReport> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = BenchArtifacts::in_dir(out_dir);

    let sampled = sample_per_class(manifest, settings.sample_n, settings.sample_seed)?;
    fs::write(&files.sampled_manifest, sampled.to_tsv())
        .map_err(|e| Error::io(&files.sampled_manifest, e))?;

    let train = extract_features(&sampled, Some(Split::Train), settings)?;
    write_features(&train, &files.train_features)?;
    let test = extract_features(&sampled, Some(Split::Test), settings)?;
    write_features(&test, &files.test_features)?;

    let (model, train_report) = train_ovr(&train, &settings.svm)?;
    for stats in &train_report.per_class {
        log::debug!(
            "class {}: {} epochs, violation {:.2e}, duality gap {:.3e}",
            stats.class_id,
            stats.epochs,
            stats.max_violation,
            stats.duality_gap
        );
    }
    write_model(&model, &files.model)?;

    let predictions = predict(&model, &test)?;
    predictions.write(&files.predictions)?;

    let eval = report(&predictions, &sampled, settings.eta_w_mode)?;
    eval.write(&files.report)?;
    Ok(eval)
}
