//! The `pathbench` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error, 3 inference backend unavailable. Diagnostics go to
//! standard error; data goes to the files named on the command line (or
//! standard output where noted).

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Component, Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataset::{load_manifest, sample_per_class, DatasetManifest, PatchRecord, Split};
use crate::error::{Error, Result};
use crate::features::{read_features, write_features, FeatureSet, FeatureVector};
use crate::metrics::{report, PredictionSet};
use crate::pipeline::{extract_features, run_bench};
use crate::retrieval::{classify_knn, neighbors_tsv, RetrievalIndex};
use crate::svm::{predict, read_model, train_ovr, write_model};
use crate::tiler::{prepare, tile_scan, ScanImage};

use config::{Overrides, PipelineConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "pathbench",
    about = "Histopathology patch classification and retrieval benchmark",
    disable_version_flag = true
)]
struct Cli {
    #[command(flatten)]
    settings: SettingsArgs,

    #[command(subcommand)]
    command: Command,
}

/// Tunables shared by every subcommand; each may also come from the config
/// file or the environment.
#[derive(Debug, Args)]
struct SettingsArgs {
    /// key=value settings file (overridden by flags and environment)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Patch side in pixels [default: 1000]
    #[arg(long, global = true)]
    patch_size: Option<usize>,
    /// 8-bit brightness at or above which a pixel is background [default: 220]
    #[arg(long, global = true)]
    bg_threshold: Option<u8>,
    /// Drop patches whose background fraction exceeds this [default: 0.99]
    #[arg(long, global = true)]
    homogeneity_max: Option<f64>,
    /// Keep patches whose background fraction is at least homogeneity-max instead
    #[arg(long, global = true)]
    invert_homogeneity: bool,
    /// Side of prepared patches fed to extractors [default: 224]
    #[arg(long, global = true)]
    resize_to: Option<usize>,
    /// histogram | lbp | onnx:<model> | import:<pfv> [default: lbp]
    #[arg(long, global = true)]
    extractor: Option<String>,
    /// Scale feature vectors to unit length
    #[arg(long, global = true)]
    l2_normalize: bool,
    /// SVM hinge penalty [default: 1]
    #[arg(long = "c", short = 'C', global = true)]
    c: Option<f64>,
    /// SVM stopping tolerance [default: 1e-4]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// SVM epoch cap [default: 1000]
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Seed for sampling and training [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Train patches kept per class when sampling [default: 100]
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Neighbours per query [default: 1]
    #[arg(long, global = true)]
    k: Option<usize>,
    /// euclidean | cosine [default: euclidean]
    #[arg(long, global = true)]
    metric: Option<String>,
    /// Worker threads (also PATHBENCH_THREADS) [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Whole-scan accuracy without per-class normalization
    #[arg(long, global = true)]
    eta_w_literal: bool,
}

impl SettingsArgs {
    fn overrides(&self) -> Overrides {
        let flag = |b: bool| b.then_some(true);
        Overrides {
            patch_size: self.patch_size,
            bg_threshold: self.bg_threshold,
            homogeneity_max: self.homogeneity_max,
            invert_homogeneity: flag(self.invert_homogeneity),
            resize_to: self.resize_to,
            extractor: self.extractor.clone(),
            l2_normalize: flag(self.l2_normalize),
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
            seed: self.seed,
            n: self.n,
            k: self.k,
            metric: self.metric.clone(),
            threads: self.threads,
            eta_w_literal: flag(self.eta_w_literal),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cut a scan into patches, write them as PNG and record them in a manifest
    Tile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "class")]
        class_id: u32,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        manifest_out: PathBuf,
        /// Defaults to the input file stem
        #[arg(long)]
        scan_id: Option<String>,
        #[arg(long, default_value = "train")]
        split: String,
        /// Add to an existing manifest instead of replacing it
        #[arg(long)]
        append: bool,
        /// Also write the prepared patches as raw vectors in a PFV1 file
        #[arg(long)]
        dump_prepared: Option<PathBuf>,
    },
    /// Keep at most n train patches per class
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute a PFV1 feature file for the patches of a manifest
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// train | test | all
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Train a one-vs-rest linear SVM on a labelled feature file
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict classes with a trained model
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact nearest-neighbour retrieval of queries against an indexed set
    Retrieve {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write majority-vote predictions
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Score predictions against the test split of a manifest
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Report file; standard output when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run sample, extract, train, classify and evaluate in one go
    Bench {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the version
    Version,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BackendUnavailable(_) => EXIT_BACKEND,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs the command line with the process environment.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_env(args, &|key| std::env::var(key).ok())
}

/// Like [`run`] with an explicit environment lookup.
pub fn run_with_env<I, T>(args: I, env: &dyn Fn(&str) -> Option<String>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();

    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let config =
        match PipelineConfig::resolve(cli.settings.overrides(), cli.settings.config.clone(), env) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| dispatch(cli.command, &config)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, config: &PipelineConfig) -> Result<()> {
    match command {
        Command::Tile {
            input,
            class_id,
            out_dir,
            manifest_out,
            scan_id,
            split,
            append,
            dump_prepared,
        } => tile(
            &TileArgs {
                input,
                class_id,
                out_dir,
                manifest_out,
                scan_id,
                split: split.parse()?,
                append,
                dump_prepared,
            },
            config,
        ),
        Command::Sample { manifest, out } => {
            let m = load_manifest(&manifest)?;
            let sampled = sample_per_class(&m, config.stages.sample_n, config.stages.sample_seed)?;
            write_text(&out, &sampled.to_tsv())
        }
        Command::Extract {
            manifest,
            out,
            split,
        } => {
            let split = match split.as_str() {
                "all" => None,
                s => Some(s.parse::<Split>()?),
            };
            let m = load_manifest(&manifest)?;
            let set = extract_features(&m, split, &config.stages)?;
            write_features(&set, &out)
        }
        Command::Train { features, out } => {
            let set = read_features(&features)?;
            let (model, report) = train_ovr(&set, &config.stages.svm)?;
            for s in &report.per_class {
                log::info!(
                    "class {}: {} epochs, violation {:.2e}, duality gap {:.3e}",
                    s.class_id,
                    s.epochs,
                    s.max_violation,
                    s.duality_gap
                );
            }
            write_model(&model, &out)
        }
        Command::Classify {
            model,
            features,
            out,
        } => {
            let model = read_model(&model)?;
            let set = read_features(&features)?;
            if set.extractor_id() != model.extractor_id {
                log::warn!(
                    "features come from `{}` but the model was trained on `{}`",
                    set.extractor_id(),
                    model.extractor_id
                );
            }
            predict(&model, &set)?.write(&out)
        }
        Command::Retrieve {
            index,
            queries,
            out,
            predictions_out,
        } => {
            let idx = RetrievalIndex::build(&read_features(&index)?, config.metric)?;
            let queries = read_features(&queries)?;
            let results = idx.query_all(&queries, config.k)?;
            write_text(&out, &neighbors_tsv(&results))?;
            if let Some(path) = predictions_out {
                classify_knn(&idx, &queries, config.k)?.write(&path)?;
            }
            Ok(())
        }
        Command::Evaluate {
            predictions,
            manifest,
            out,
        } => {
            let preds = PredictionSet::read(&predictions)?;
            let m = load_manifest(&manifest)?;
            let r = report(&preds, &m, config.stages.eta_w_mode)?;
            match out {
                Some(path) => r.write(&path),
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout
                        .write_all(r.to_json().as_bytes())
                        .map_err(|e| Error::io("<stdout>", e))
                }
            }
        }
        Command::Bench { manifest, out_dir } => {
            let m = load_manifest(&manifest)?;
            let r = run_bench(&m, &config.stages, &out_dir)?;
            eprintln!(
                "eta_p {:.4}  eta_w {:.4}  eta_total {:.4}  ({} test patches)",
                r.eta_p, r.eta_w, r.eta_total, r.n_tot
            );
            Ok(())
        }
        Command::Version => {
            println!("pathbench {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct TileArgs {
    input: PathBuf,
    class_id: u32,
    out_dir: PathBuf,
    manifest_out: PathBuf,
    scan_id: Option<String>,
    split: Split,
    append: bool,
    dump_prepared: Option<PathBuf>,
}

fn tile(args: &TileArgs, config: &PipelineConfig) -> Result<()> {
    let scan_id = match &args.scan_id {
        Some(id) => id.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| {
                Error::InvalidArgument("cannot derive a scan id from the input path".into())
            })?,
    };
    let scan = ScanImage::load(&args.input, scan_id)?;
    let tiled = tile_scan(&scan, &config.tiler, &args.out_dir)?;
    log::info!("{}: kept {} patches", scan.scan_id, tiled.len());

    let manifest_dir = args
        .manifest_out
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut records = Vec::new();
    let mut declared = vec![args.class_id];
    if args.append && args.manifest_out.exists() {
        let existing = load_manifest(&args.manifest_out)?;
        declared.extend(existing.classes().iter().copied());
        records.extend(existing.records().iter().cloned());
    }
    for t in &tiled {
        records.push(PatchRecord {
            patch_id: t.patch.patch_id(),
            class_id: args.class_id,
            split: args.split,
            grid_row: t.patch.grid_row as u32,
            grid_col: t.patch.grid_col as u32,
            path: relative_path(&t.file, &manifest_dir)?,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyManifest);
    }
    let manifest = DatasetManifest::new(declared, records, manifest_dir)?;
    manifest.write(&args.manifest_out)?;

    if let Some(path) = &args.dump_prepared {
        let resize_to = config.tiler.resize_to;
        let vectors = tiled
            .iter()
            .map(|t| {
                let p = prepare(&t.patch, resize_to)?;
                Ok(FeatureVector::new(
                    p.patch_id.clone(),
                    Some(args.class_id),
                    p.values().to_vec(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let set = FeatureSet::new(
            format!("prepared{resize_to}"),
            resize_to * resize_to,
            vectors,
        )?;
        write_features(&set, path)?;
    }
    Ok(())
}

/// `target` relative to directory `base`, with `/` separators.
fn relative_path(target: &Path, base: &Path) -> Result<String> {
    fn parts(p: &Path) -> Result<Vec<OsString>> {
        let p = if p.as_os_str().is_empty() {
            Path::new(".")
        } else {
            p
        };
        let abs = std::path::absolute(p).map_err(|e| Error::io(p, e))?;
        let mut out: Vec<OsString> = Vec::new();
        for c in abs.components() {
            match c {
                Component::Normal(s) => out.push(s.to_os_string()),
                Component::ParentDir => {
                    out.pop();
                }
                _ => {}
            }
        }
        Ok(out)
    }
    let target = parts(target)?;
    let base = parts(base)?;
    let common = target.iter().zip(&base).take_while(|(a, b)| a == b).count();
    let mut rel: Vec<String> = vec!["..".to_string(); base.len() - common];
    rel.extend(
        target[common..]
            .iter()
            .map(|s| s.to_string_lossy().into_owned()),
    );
    Ok(rel.join("/"))
}
