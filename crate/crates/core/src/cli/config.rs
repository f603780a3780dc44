//! Settings resolution: command-line flags override environment variables,
//! which override the `key=value` config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::ExtractorSpec;
use crate::metrics::EtaWMode;
use crate::pipeline::StageSettings;
use crate::retrieval::Metric;
use crate::svm::SvmParams;
use crate::tiler::TilerConfig;

pub const ENV_THREADS: &str = "PATHBENCH_THREADS";
pub const ENV_CONFIG: &str = "PATHBENCH_CONFIG";

/// Keys accepted in a config file.
pub const CONFIG_KEYS: &[&str] = &[
    "patch_size",
    "bg_threshold",
    "homogeneity_max",
    "invert_homogeneity",
    "resize_to",
    "extractor",
    "l2_normalize",
    "c",
    "tol",
    "max_iter",
    "seed",
    "n",
    "k",
    "metric",
    "threads",
    "eta_w_literal",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", idx + 1)))?;
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    idx + 1
                )));
            }
            if values
                .insert(key.to_string(), value.trim().to_string())
                .is_some()
            {
                return Err(Error::Config(format!(
                    "line {}: key `{key}` set twice",
                    idx + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }
}

/// Tunables that may come from any layer. `None` means "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub patch_size: Option<usize>,
    pub bg_threshold: Option<u8>,
    pub homogeneity_max: Option<f64>,
    pub invert_homogeneity: Option<bool>,
    pub resize_to: Option<usize>,
    pub extractor: Option<String>,
    pub l2_normalize: Option<bool>,
    pub c: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub metric: Option<String>,
    pub threads: Option<usize>,
    pub eta_w_literal: Option<bool>,
}

impl Overrides {
    fn from_file(file: &ConfigFile) -> Result<Self> {
        Ok(Self {
            patch_size: file.get("patch_size")?,
            bg_threshold: file.get("bg_threshold")?,
            homogeneity_max: file.get("homogeneity_max")?,
            invert_homogeneity: file.get("invert_homogeneity")?,
            resize_to: file.get("resize_to")?,
            extractor: file.get("extractor")?,
            l2_normalize: file.get("l2_normalize")?,
            c: file.get("c")?,
            tol: file.get("tol")?,
            max_iter: file.get("max_iter")?,
            seed: file.get("seed")?,
            n: file.get("n")?,
            k: file.get("k")?,
            metric: file.get("metric")?,
            threads: file.get("threads")?,
            eta_w_literal: file.get("eta_w_literal")?,
        })
    }

    /// Fields set in `self` win over `lower`.
    fn over(self, lower: Overrides) -> Overrides {
        Overrides {
            patch_size: self.patch_size.or(lower.patch_size),
            bg_threshold: self.bg_threshold.or(lower.bg_threshold),
            homogeneity_max: self.homogeneity_max.or(lower.homogeneity_max),
            invert_homogeneity: self.invert_homogeneity.or(lower.invert_homogeneity),
            resize_to: self.resize_to.or(lower.resize_to),
            extractor: self.extractor.or(lower.extractor),
            l2_normalize: self.l2_normalize.or(lower.l2_normalize),
            c: self.c.or(lower.c),
            tol: self.tol.or(lower.tol),
            max_iter: self.max_iter.or(lower.max_iter),
            seed: self.seed.or(lower.seed),
            n: self.n.or(lower.n),
            k: self.k.or(lower.k),
            metric: self.metric.or(lower.metric),
            threads: self.threads.or(lower.threads),
            eta_w_literal: self.eta_w_literal.or(lower.eta_w_literal),
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub tiler: TilerConfig,
    pub stages: StageSettings,
    pub k: usize,
    pub metric: Metric,
    /// Worker threads; 0 lets the runtime pick.
    pub threads: usize,
}

impl PipelineConfig {
    /// Merges `flags` over the environment over the config file (`--config`
    /// or `PATHBENCH_CONFIG`), then fills defaults and validates.
    pub fn resolve(
        flags: Overrides,
        config_path: Option<PathBuf>,
        env: &dyn Fn(&str) -> Option<String>,
    ) -> Result<Self> {
        let config_path = config_path.or_else(|| env(ENV_CONFIG).map(PathBuf::from));
        let file = match &config_path {
            Some(p) => Overrides::from_file(&ConfigFile::load(p)?)?,
            None => Overrides::default(),
        };
        let env_layer = Overrides {
            threads: env(ENV_THREADS)
                .map(|v| {
                    v.trim().parse::<usize>().map_err(|_| {
                        Error::Config(format!("{ENV_THREADS}=`{v}` is not a thread count"))
                    })
                })
                .transpose()?,
            ..Overrides::default()
        };
        let o = flags.over(env_layer).over(file);

        let tiler_defaults = TilerConfig::default();
        let tiler = TilerConfig {
            patch_size: o.patch_size.unwrap_or(tiler_defaults.patch_size),
            bg_threshold: o.bg_threshold.unwrap_or(tiler_defaults.bg_threshold),
            homogeneity_max: o.homogeneity_max.unwrap_or(tiler_defaults.homogeneity_max),
            invert_homogeneity: o.invert_homogeneity.unwrap_or(false),
            resize_to: o.resize_to.unwrap_or(tiler_defaults.resize_to),
        };
        tiler.validate()?;

        let svm_defaults = SvmParams::default();
        let seed = o.seed.unwrap_or(svm_defaults.seed);
        let svm = SvmParams {
            c: o.c.unwrap_or(svm_defaults.c),
            tol: o.tol.unwrap_or(svm_defaults.tol),
            max_iter: o.max_iter.unwrap_or(svm_defaults.max_iter),
            seed,
        };
        svm.validate()?;

        let extractor = o
            .extractor
            .as_deref()
            .unwrap_or("lbp")
            .parse::<ExtractorSpec>()?;
        let stages = StageSettings {
            extractor,
            resize_to: tiler.resize_to,
            l2_normalize: o.l2_normalize.unwrap_or(false),
            svm,
            sample_n: o.n.unwrap_or(100),
            sample_seed: seed,
            eta_w_mode: if o.eta_w_literal.unwrap_or(false) {
                EtaWMode::Literal
            } else {
                EtaWMode::PerClassRecall
            },
        };
        if stages.sample_n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let k = o.k.unwrap_or(1);
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(Self {
            tiler,
            stages,
            k,
            metric: o.metric.as_deref().unwrap_or("euclidean").parse()?,
            threads: o.threads.unwrap_or(0),
        })
    }
}
