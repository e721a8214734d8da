//! TOML experiment configuration.
//!
//! ```toml
//! kind = "monotone"          # dep-multiclass | dense-train | prune-sweep | monotone
//! seeds = [0, 1, 2]
//! out = "results/monotone"   # optional; --out wins
//!
//! [monotone]
//! sigmas = [0.05, 0.1, 0.15, 0.2]
//! ```
//!
//! Every section has defaults; only the section matching `kind` is read
//! (plus `[data]` for the MNIST kinds). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tropmorph::autodiff::PositiveTransform;
use tropmorph::dep::{CenterOrientation, Centers};
use tropmorph::morphonet::{LayerSpec, OptimizerKind};
use tropmorph::pruning::STANDARD_SWEEP;

use crate::error::{CliError, Result};

/// Overrides `[data] root` when set.
pub const DATA_ROOT_ENV: &str = "TROPMORPH_DATA_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DepMulticlass,
    DenseTrain,
    PruneSweep,
    Monotone,
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExperimentKind::DepMulticlass => "dep-multiclass",
            ExperimentKind::DenseTrain => "dense-train",
            ExperimentKind::PruneSweep => "prune-sweep",
            ExperimentKind::Monotone => "monotone",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub dense: DenseConfig,
    #[serde(default)]
    pub prune: PruneConfig,
    #[serde(default)]
    pub dep: DepConfig,
    #[serde(default)]
    pub monotone: MonotoneConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub name: String,
    pub root: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Stratified training subset size; all rows when absent.
    pub train_size: Option<usize>,
    pub test_size: Option<usize>,
    /// Seed of the stratified subsets, shared by every run.
    pub subset_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            name: "mnist".into(),
            root: PathBuf::from("data/mnist"),
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            train_size: None,
            test_size: None,
            subset_seed: 0,
        }
    }
}

impl DataConfig {
    /// `root`, or the environment override.
    pub fn resolved_root(&self) -> PathBuf {
        match std::env::var_os(DATA_ROOT_ENV) {
            Some(r) if !r.is_empty() => PathBuf::from(r),
            _ => self.root.clone(),
        }
    }

    pub fn paths(&self) -> [PathBuf; 4] {
        let root = self.resolved_root();
        [
            root.join(&self.train_images),
            root.join(&self.train_labels),
            root.join(&self.test_images),
            root.join(&self.test_labels),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// Hidden layers such as `"dilation:64"` or `"mixed:128"`; a linear
    /// output layer over the classes is appended.
    pub layers: Vec<String>,
}

impl ModelConfig {
    pub fn specs(&self, classes: usize) -> Result<Vec<LayerSpec>> {
        let mut specs = self
            .layers
            .iter()
            .map(|l| l.parse::<LayerSpec>().map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        specs.push(LayerSpec::Linear(classes));
        Ok(specs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenseConfig {
    pub models: Vec<ModelConfig>,
    pub optimizers: Vec<OptimizerKind>,
    pub epochs: usize,
    /// Overrides the optimizer default (128) when set.
    pub batch_size: Option<usize>,
    /// Overrides the optimizer default (Adam 0.001, SGD 0.09) when set.
    pub learning_rate: Option<f64>,
    pub checkpoints: bool,
    pub weight_images: bool,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            models: vec![
                ModelConfig {
                    name: "mixed".into(),
                    layers: vec!["mixed:128".into()],
                },
                ModelConfig {
                    name: "relu".into(),
                    layers: vec!["relu:128".into()],
                },
            ],
            optimizers: vec![OptimizerKind::Adam],
            epochs: 50,
            batch_size: None,
            learning_rate: None,
            checkpoints: true,
            weight_images: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PruneConfig {
    /// Retention percentages, evaluated in this order.
    pub p: Vec<f64>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            p: STANDARD_SWEEP.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    Ovo,
    Ovr,
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Ovo => "ovo",
            Reduction::Ovr => "ovr",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepConfig {
    pub reduction: Reduction,
    /// Bagging members (RBF maps) per binary problem.
    pub members: usize,
    pub fraction: f64,
    pub margin: f64,
    pub orientation: CenterOrientation,
    pub centers: Centers,
    /// Regularization weight `C` of the greedy trainer.
    pub c: f64,
    pub outlier_norm: Option<f64>,
    pub max_iterations: usize,
    pub checkpoint: bool,
}

impl Default for DepConfig {
    fn default() -> Self {
        Self {
            reduction: Reduction::Ovo,
            members: 5,
            fraction: 1.0,
            margin: 0.05,
            orientation: CenterOrientation::ClassSigned,
            centers: Centers::ClassCentroid,
            c: 0.0,
            outlier_norm: None,
            max_iterations: 50,
            checkpoint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotoneConfig {
    pub samples: usize,
    pub groups: usize,
    pub planes: usize,
    pub beta: f64,
    pub gain: f64,
    pub transform: PositiveTransform,
    pub sigmas: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grid_points: usize,
    pub active_set: bool,
    /// Noise level drawn in the overlay plot (first seed).
    pub overlay_sigma: Option<f64>,
}

impl Default for MonotoneConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            groups: 5,
            planes: 5,
            beta: 5.0,
            gain: 20.0,
            transform: PositiveTransform::Square,
            sigmas: vec![0.05, 0.1, 0.15, 0.2],
            epochs: 1000,
            learning_rate: 0.01,
            grid_points: 1000,
            active_set: false,
            overlay_sigma: Some(0.15),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        match self.kind {
            ExperimentKind::DenseTrain | ExperimentKind::PruneSweep => {
                if self.dense.models.is_empty() || self.dense.optimizers.is_empty() {
                    return bad("dense.models and dense.optimizers must not be empty");
                }
                if self.dense.epochs == 0 {
                    return bad("dense.epochs must be positive");
                }
                for m in &self.dense.models {
                    m.specs(10)?;
                }
                if self.kind == ExperimentKind::PruneSweep {
                    if self.prune.p.is_empty() {
                        return bad("prune.p must not be empty");
                    }
                    if self.prune.p.iter().any(|&p| !(p > 0.0 && p <= 100.0)) {
                        return bad("prune.p entries must lie in (0, 100]");
                    }
                }
            }
            ExperimentKind::DepMulticlass => {
                if self.dep.members == 0 {
                    return bad("dep.members must be positive");
                }
            }
            ExperimentKind::Monotone => {
                if self.monotone.sigmas.is_empty() {
                    return bad("monotone.sigmas must not be empty");
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML text, the input of the manifest hash. The output
    /// directory is left out so reruns elsewhere hash the same.
    pub fn canonical(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        toml::to_string(&c).expect("config serializes")
    }
}

/// Longest seed list `parse_seeds` will expand.
pub const MAX_SEEDS: u64 = 100_000;

/// Parses `--seeds` lists such as `0,1,2` or `0-4`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Config(format!("bad seed '{s}'")))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(CliError::Config(format!("empty seed range '{part}'")));
                }
                if b - a >= MAX_SEEDS.saturating_sub(seeds.len() as u64) {
                    return Err(CliError::Config(format!("more than {MAX_SEEDS} seeds")));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(num(part)?),
        }
    }
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    Ok(seeds)
}
