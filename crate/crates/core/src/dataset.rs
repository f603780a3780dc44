//! Experiment manifest: which patches exist, their class, their split.
//!
//! Manifests are plain TSV, one record per line:
//!
//! ```text
//! patch_id <TAB> class_id <TAB> split <TAB> grid_row <TAB> grid_col <TAB> path
//! ```
//!
//! Lines starting with `#` are comments. A comment of the form
//! `# classes: 0,1,2` declares classes that may have no records; every other
//! comment is ignored. Paths are relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

const CLASSES_DIRECTIVE: &str = "classes:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "split must be `train` or `test`, got `{other}`"
            ))),
        }
    }
}

/// One tiled patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchRecord {
    pub patch_id: String,
    pub class_id: u32,
    pub split: Split,
    pub grid_row: u32,
    pub grid_col: u32,
    /// Relative to the manifest root.
    pub path: String,
}

impl PatchRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.patch_id.is_empty() {
            return Err("empty patch id".into());
        }
        if self.patch_id.contains(['\t', '\n', '\r']) {
            return Err(format!(
                "patch id `{}` contains a tab or newline",
                self.patch_id
            ));
        }
        if self.path.is_empty() {
            return Err(format!("record `{}` has an empty path", self.patch_id));
        }
        if self.path.contains(['\t', '\n', '\r']) {
            return Err(format!(
                "path of `{}` contains a tab or newline",
                self.patch_id
            ));
        }
        if Path::new(&self.path).is_absolute() || self.path.starts_with('/') {
            return Err(format!(
                "record `{}` has absolute path `{}`",
                self.patch_id, self.path
            ));
        }
        Ok(())
    }

    fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.patch_id, self.class_id, self.split, self.grid_row, self.grid_col, self.path
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    classes: BTreeSet<u32>,
    records: Vec<PatchRecord>,
    root: PathBuf,
}

impl DatasetManifest {
    /// Builds a manifest, checking id uniqueness and record validity. The
    /// class set is `declared` plus every class seen in `records`.
    pub fn new(
        declared: impl IntoIterator<Item = u32>,
        records: Vec<PatchRecord>,
        root: impl Into<PathBuf>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate().map_err(Error::InvalidArgument)?;
            if !seen.insert(r.patch_id.as_str()) {
                return Err(Error::DuplicateId(r.patch_id.clone()));
            }
        }
        let mut classes: BTreeSet<u32> = declared.into_iter().collect();
        classes.extend(records.iter().map(|r| r.class_id));
        Ok(Self {
            classes,
            records,
            root: root.into(),
        })
    }

    pub fn classes(&self) -> &BTreeSet<u32> {
        &self.classes
    }

    pub fn records(&self) -> &[PatchRecord] {
        &self.records
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn with_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.root = root.into();
        self
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &PatchRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Location of a record's patch file on disk.
    pub fn resolve(&self, record: &PatchRecord) -> PathBuf {
        self.root.join(&record.path)
    }

    pub fn get(&self, patch_id: &str) -> Option<&PatchRecord> {
        self.records.iter().find(|r| r.patch_id == patch_id)
    }

    /// TSV text, including a `# classes:` line so that classes without
    /// records survive a round trip.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let ids: Vec<String> = self.classes.iter().map(u32::to_string).collect();
        out.push_str(&format!("# {CLASSES_DIRECTIVE} {}\n", ids.join(",")));
        for r in &self.records {
            out.push_str(&r.to_tsv_line());
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self> {
        let mut declared = BTreeSet::new();
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(list) = comment.trim().strip_prefix(CLASSES_DIRECTIVE) {
                    for tok in list.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
                        let class = tok.parse::<u32>().map_err(|_| Error::Parse {
                            line: line_no,
                            message: format!("bad class id `{tok}` in classes declaration"),
                        })?;
                        declared.insert(class);
                    }
                }
                continue;
            }
            records.push(parse_record(line, line_no)?);
        }
        Self::new(declared, records, root)
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<PatchRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    let bad = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    if fields.len() != 6 {
        return Err(bad(format!(
            "expected 6 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let int = |name: &str, s: &str| {
        s.parse::<u32>()
            .map_err(|_| bad(format!("{name} must be a nonnegative integer, got `{s}`")))
    };
    let split = fields[2].parse::<Split>().map_err(|_| {
        bad(format!(
            "split must be `train` or `test`, got `{}`",
            fields[2]
        ))
    })?;
    let record = PatchRecord {
        patch_id: fields[0].to_string(),
        class_id: int("class_id", fields[1])?,
        split,
        grid_row: int("grid_row", fields[3])?,
        grid_col: int("grid_col", fields[4])?,
        path: fields[5].to_string(),
    };
    record.validate().map_err(bad)?;
    Ok(record)
}

/// Reads a manifest TSV. The manifest root is the file's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("manifest is not valid UTF-8: {e}"),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    DatasetManifest::parse(&text, root)
}

/// Keeps at most `n` train records per class, drawn uniformly without
/// replacement; test records pass through. Output is sorted by class id, then
/// patch id.
///
/// Each class draws from its own ChaCha8 stream keyed by `(seed, class_id)`
/// over its train records in patch-id order, so the result does not depend
/// on input record order. A class with fewer than `n` train records keeps
/// all of them and a warning is logged.
pub fn sample_per_class(
    manifest: &DatasetManifest,
    n: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample size n must be at least 1".into(),
        ));
    }
    let mut train_by_class: BTreeMap<u32, Vec<&PatchRecord>> = BTreeMap::new();
    let mut kept: Vec<PatchRecord> = Vec::new();
    for r in manifest.records() {
        match r.split {
            Split::Train => train_by_class.entry(r.class_id).or_default().push(r),
            Split::Test => kept.push(r.clone()),
        }
    }
    for (&class, pool) in train_by_class.iter_mut() {
        pool.sort_by(|a, b| a.patch_id.cmp(&b.patch_id));
        if pool.len() <= n {
            if pool.len() < n {
                log::warn!(
                    "class {class}: only {} train records available, keeping all (requested {n})",
                    pool.len()
                );
            }
            kept.extend(pool.iter().map(|r| (*r).clone()));
            continue;
        }
        let mut rng = SeededRng::new(derive_seed(seed, u64::from(class)));
        kept.extend(
            rng.sample_indices(pool.len(), n)
                .into_iter()
                .map(|i| pool[i].clone()),
        );
    }
    for &class in manifest.classes() {
        if !train_by_class.contains_key(&class) {
            log::warn!("class {class}: no train records available");
        }
    }
    kept.sort_by(|a, b| (a.class_id, &a.patch_id).cmp(&(b.class_id, &b.patch_id)));
    DatasetManifest::new(manifest.classes().iter().copied(), kept, manifest.root())
}

/// Number of records per class in `split`. Every manifest class is present,
/// with count 0 when it has no records in that split.
pub fn class_distribution(manifest: &DatasetManifest, split: Split) -> BTreeMap<u32, usize> {
    let mut counts: BTreeMap<u32, usize> = manifest.classes().iter().map(|&c| (c, 0)).collect();
    for r in manifest.split(split) {
        *counts.entry(r.class_id).or_insert(0) += 1;
    }
    counts
}
