//! Run configuration: defaults, an optional JSON file, then flag overrides.

use std::path::{Path, PathBuf};

use nfig_core::bands::{BandSchedule, Interp};
use nfig_core::generator::{Optimizer, TrainConfig, DEFAULT_CFG_SCALE, DEFAULT_TOP_K};
use nfig_core::metrics::DEFAULT_PSD_BINS;
use nfig_core::pipeline::DEFAULT_PATCH;
use nfig_core::quantizer::DEFAULT_CODEBOOK_SIZE;
use nfig_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for ModelHyper {
    fn default() -> Self {
        // Width and head count are sized for a single CPU.
        Self {
            d: 64,
            layers: 16,
            heads: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansHyper {
    pub iterations: usize,
    pub batch_size: usize,
}

impl Default for KMeansHyper {
    fn default() -> Self {
        Self {
            iterations: 20,
            batch_size: 1024,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub codebook: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schedule: BandSchedule,
    pub patch: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub interp: Interp,
    pub cfg_scale: f64,
    pub top_k: usize,
    pub temperature: f64,
    pub seed: u64,
    pub psd_bins: usize,
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub kmeans: KMeansHyper,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: BandSchedule::default(),
            patch: DEFAULT_PATCH,
            k: DEFAULT_CODEBOOK_SIZE,
            interp: Interp::Bilinear,
            cfg_scale: DEFAULT_CFG_SCALE,
            top_k: DEFAULT_TOP_K,
            temperature: 1.0,
            seed: 0,
            psd_bins: DEFAULT_PSD_BINS,
            model: ModelHyper::default(),
            train: TrainConfig {
                steps: 1000,
                optimizer: Optimizer::Adam,
                learning_rate: 8e-5,
                momentum: 0.9,
                batch_size: 768,
                cond_dropout: 0.1,
                grad_clip: 1.0,
                seed: 0,
            },
            kmeans: KMeansHyper::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path`, when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let bytes = nfig_core::io::read_file(p)?;
                serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("config {}: {e}", p.display())))
            }
        }
    }
}

/// Flags shared by several commands; each set flag replaces the config value.
#[derive(Debug, Default, Clone, clap::Args)]
pub struct Overrides {
    /// Band schedule as square sides or `hxw` pairs, e.g. `1,2,4` or `1x1,2x3`.
    #[arg(long, global = true)]
    pub schedule: Option<String>,
    #[arg(long, global = true)]
    pub patch: Option<usize>,
    #[arg(long, global = true, value_parser = parse_interp)]
    pub interp: Option<Interp>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

fn parse_interp(s: &str) -> std::result::Result<Interp, String> {
    match s {
        "bilinear" => Ok(Interp::Bilinear),
        "box" => Ok(Interp::Box),
        _ => Err(format!("unknown interpolation `{s}` (expected bilinear or box)")),
    }
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(s) = &self.schedule {
            cfg.schedule = BandSchedule::parse(s)?;
        }
        if let Some(p) = self.patch {
            cfg.patch = p;
        }
        if let Some(i) = self.interp {
            cfg.interp = i;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.train.seed = s;
        }
        Ok(())
    }
}
