//! Run configuration: defaults, an optional TOML file, then command-line
//! overrides. The hash covers every setting that can change a result, so
//! output paths are left out of it.

use std::fs;
use std::path::{Path, PathBuf};

use bsen_core::classify::SvmOptions;
use bsen_core::experiment::ExperimentConfig;
use bsen_core::features::Extractor;
use bsen_core::model::{BehaviorTest, BsenConfig};
use bsen_core::stats::Correction;
use bsen_core::volume::Dims;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};

/// Seed and configuration hash stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# seed={} config_hash={}\n", self.seed, self.config_hash)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Padded network grid; derived from the data (each axis rounded up to a
    /// multiple of 8) when absent.
    pub input_dims: Option<Dims>,
    pub channels: [usize; 3],
    pub alpha: f64,
    pub delta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_stage1: f64,
    pub lr_stage2: f64,
    pub center_momentum: f64,
    pub folds: usize,
    /// 1-based inclusive frame window, e.g. `[20, 90]`.
    pub window: Option<[usize; 2]>,
    /// Restricts stage 2 to one behavior test ("cdr" or "mmse").
    pub behavior: Option<String>,
    /// Any of ica, pca, cae, bsen_cdr, bsen_mmse, fusion.
    pub extractors: Vec<String>,
    pub fusion_weights: [f64; 2],
    pub components: usize,
    pub svm_c: f64,
    pub svm_tol: f64,
    pub svm_max_epochs: usize,
    /// Significance level of the region report.
    pub alpha_level: f64,
    pub stats_correction: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = BsenConfig::default();
        let svm = SvmOptions::default();
        Self {
            manifest: None,
            atlas: None,
            out: None,
            seed: m.seed,
            input_dims: None,
            channels: m.channels,
            alpha: m.alpha,
            delta: m.delta,
            batch_size: m.batch_size,
            epochs: m.epochs,
            lr_stage1: m.lr_stage1,
            lr_stage2: m.lr_stage2,
            center_momentum: m.center_momentum,
            folds: 5,
            window: None,
            behavior: None,
            extractors: ["ica", "pca", "cae", "bsen_cdr", "bsen_mmse", "fusion"].map(String::from).to_vec(),
            fusion_weights: [0.5, 0.5],
            components: 64,
            svm_c: svm.c,
            svm_tol: svm.tol,
            svm_max_epochs: svm.max_epochs,
            alpha_level: 0.05,
            stats_correction: "holm".into(),
        }
    }
}

/// Extractors plus whether the fused arm is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub extractors: Vec<Extractor>,
    pub fusion: bool,
}

pub fn parse_behavior(s: &str) -> Result<BehaviorTest> {
    match s.trim().to_ascii_lowercase().as_str() {
        "cdr" => Ok(BehaviorTest::Cdr),
        "mmse" => Ok(BehaviorTest::Mmse),
        other => Err(Error::usage(format!("--behavior must be cdr or mmse, got {other:?}"))),
    }
}

impl RunConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        toml::from_str(&text).map_err(|e| Error::usage(format!("{}: {}", path.display(), e.message())))
    }

    /// Hex SHA-256 of the canonical JSON of every result-affecting setting.
    pub fn hash(&self) -> String {
        let mut h = self.clone();
        h.manifest = None;
        h.atlas = None;
        h.out = None;
        sha256_hex(&serde_json::to_vec(&h).expect("config serializes"))
    }

    pub fn provenance(&self) -> Provenance {
        Provenance { seed: self.seed, config_hash: self.hash() }
    }

    pub fn behavior(&self) -> Result<Option<BehaviorTest>> {
        self.behavior.as_deref().map(parse_behavior).transpose()
    }

    pub fn correction(&self) -> Result<Correction> {
        self.stats_correction
            .parse()
            .map_err(|_| Error::usage(format!("--stats-correction must be none, holm or bonferroni, got {:?}", self.stats_correction)))
    }

    pub fn selection(&self) -> Result<Selection> {
        let mut sel = Selection { extractors: Vec::new(), fusion: false };
        for name in &self.extractors {
            if name.trim().eq_ignore_ascii_case("fusion") {
                sel.fusion = true;
                continue;
            }
            let e: Extractor = name
                .parse()
                .map_err(|_| Error::usage(format!("unknown extractor {name:?}; use ica, pca, cae, bsen_cdr, bsen_mmse or fusion")))?;
            if !sel.extractors.contains(&e) {
                sel.extractors.push(e);
            }
        }
        if let Some(b) = self.behavior()? {
            let other = match b {
                BehaviorTest::Cdr => Extractor::BsenMmse,
                BehaviorTest::Mmse => Extractor::BsenCdr,
            };
            sel.extractors.retain(|&e| e != other);
            sel.fusion = false;
        }
        if sel.fusion {
            for e in [Extractor::BsenCdr, Extractor::BsenMmse] {
                if !sel.extractors.contains(&e) {
                    sel.extractors.push(e);
                }
            }
        }
        if sel.extractors.is_empty() {
            return Err(Error::usage("no extractors selected"));
        }
        sel.extractors.sort_by_key(|e| Extractor::ALL.iter().position(|x| x == e));
        Ok(sel)
    }

    /// Grid derived from data dims unless configured explicitly.
    pub fn grid(&self, data_dims: Dims) -> Result<Dims> {
        let g = self.input_dims.unwrap_or(data_dims.map(|d| d.div_ceil(8) * 8));
        if g.iter().zip(&data_dims).any(|(g, d)| g < d) {
            return Err(Error::usage(format!("input_dims {g:?} are smaller than the data grid {data_dims:?}")));
        }
        Ok(g)
    }

    pub fn model(&self, grid: Dims) -> BsenConfig {
        BsenConfig {
            input_dims: grid,
            channels: self.channels,
            alpha: self.alpha,
            delta: self.delta,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr_stage1: self.lr_stage1,
            lr_stage2: self.lr_stage2,
            center_momentum: self.center_momentum,
            seed: self.seed,
        }
    }

    pub fn experiment(&self, grid: Dims) -> Result<ExperimentConfig> {
        let sel = self.selection()?;
        let mut cfg = ExperimentConfig::new(self.model(grid));
        cfg.folds = self.folds;
        cfg.window = self.window.map(|[a, b]| (a, b));
        cfg.extractors = sel.extractors;
        cfg.fusion_weights = self.fusion_weights;
        cfg.fuse = sel.fusion;
        cfg.components = self.components;
        cfg.svm = SvmOptions { c: self.svm_c, tol: self.svm_tol, max_epochs: self.svm_max_epochs };
        cfg.validate().map_err(|e| Error::usage(format!("invalid configuration: {e}")))?;
        Ok(cfg)
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        self.model([8, 8, 8]).validate().map_err(|e| Error::usage(format!("invalid configuration: {e}")))?;
        if self.epochs == 0 {
            return Err(Error::usage("epochs must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::usage(format!("--folds must be at least 2, got {}", self.folds)));
        }
        if let Some([a, b]) = self.window {
            if a == 0 || b < a {
                return Err(Error::usage(format!("window [{a}, {b}] must satisfy 1 <= start <= end")));
            }
        }
        if self.fusion_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || self.fusion_weights.iter().all(|&w| w == 0.0) {
            return Err(Error::usage("--fusion-weights must be two non-negative numbers, not both zero"));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return Err(Error::usage(format!("alpha level must lie in (0, 1), got {}", self.alpha_level)));
        }
        if self.components == 0 {
            return Err(Error::usage("components must be at least 1"));
        }
        self.correction()?;
        self.behavior()?;
        self.selection()?;
        Ok(())
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| Error::usage("missing --manifest <path to manifest.csv>"))
    }

    pub fn require_atlas(&self) -> Result<&Path> {
        self.atlas.as_deref().ok_or_else(|| Error::usage("missing --atlas <path to atlas .vol>"))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::usage("missing --out <run directory>"))
    }
}
