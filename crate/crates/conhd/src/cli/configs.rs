//! JSON configuration schemas for the CLI commands. Unknown keys are
//! rejected; every field has a default so partial configs stay small.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::encpipe::TrainConfig;
use crate::hypergraph::{random_hypergraph, DegreeLaw, Hypergraph, IdRemap};
use crate::neural::ModelConfig;
use crate::regularizers::RegularizerKind;
use crate::seed;

use super::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGraphSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_size_min")]
    pub size_min: usize,
    #[serde(default = "default_size_max")]
    pub size_max: usize,
}

fn default_size_min() -> usize {
    2
}

fn default_size_max() -> usize {
    6
}

/// Hypergraph input: a text file or a seeded random generator spec
/// (exactly one must be set).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSource {
    pub hypergraph: Option<PathBuf>,
    pub random: Option<RandomGraphSpec>,
}

impl GraphSource {
    pub fn load(&self, seed_value: u64) -> Result<(Hypergraph, Option<IdRemap>), CliError> {
        match (&self.hypergraph, &self.random) {
            (Some(path), None) => {
                let (h, remap) = crate::hypergraph::load_hypergraph(path)
                    .map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok((h, Some(remap)))
            }
            (None, Some(spec)) => {
                let h = random_hypergraph(
                    spec.n,
                    spec.m,
                    DegreeLaw::Uniform { lo: spec.size_min, hi: spec.size_max },
                    seed::derive(seed_value, "graph"),
                )
                .map_err(|e| CliError::Runtime(e.to_string()))?;
                Ok((h, None))
            }
            _ => Err(CliError::Config(
                "graph source needs exactly one of `hypergraph` or `random`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Gd,
    Admm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffuseConfig {
    pub graph: GraphSource,
    /// Node feature CSV (`node_id,f0,...`); mutually exclusive with
    /// `random_features`.
    pub features: Option<PathBuf>,
    /// Width of randomly drawn standard-normal node features.
    pub random_features: Option<usize>,
    pub method: MethodName,
    pub alpha: f64,
    pub rho: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub edge_reg: RegularizerKind,
    pub node_reg: RegularizerKind,
    pub steps: usize,
    pub snapshot_stride: Option<usize>,
    pub seed: u64,
}

impl Default for DiffuseConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::default(),
            features: None,
            random_features: None,
            method: MethodName::Gd,
            alpha: 0.01,
            rho: 1.0,
            lambda: 1.0,
            gamma: 1.0,
            edge_reg: RegularizerKind::Ce,
            node_reg: RegularizerKind::Ce,
            steps: 100,
            snapshot_stride: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenKind {
    Outsider,
    RankLabel,
    Semisynthetic,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub kind: GenKind,
    pub graph: GraphSource,
    /// Node features for outsider datasets: a CSV path...
    pub features: Option<PathBuf>,
    /// ...or a width of randomly drawn standard-normal features.
    pub random_features: Option<usize>,
    /// New edges per retained edge (outsider).
    pub variants: usize,
    /// Sample count (semisynthetic).
    pub samples: usize,
    /// Regularizer driving the semisynthetic diffusion.
    pub reg: RegularizerKind,
    /// Train/val/test proportions for edge-level (or sample-level) splits.
    pub proportions: [f64; 3],
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            kind: GenKind::RankLabel,
            graph: GraphSource::default(),
            features: None,
            random_features: None,
            variants: 5,
            samples: 100,
            reg: RegularizerKind::Ce,
            proportions: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: crate::encpipe::Split,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { dataset: None, checkpoint: None, split: crate::encpipe::Split::Test, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub graph: GraphSource,
    pub kind: RegularizerKind,
    pub samples: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource {
                hypergraph: None,
                random: Some(RandomGraphSpec { n: 100, m: 150, size_min: 2, size_max: 6 }),
            },
            kind: RegularizerKind::Ce,
            samples: 100,
            model: ModelConfig {
                d: 64,
                layers: 2,
                share_weights: true,
                dropout_rate: 0.0,
                ..ModelConfig::default()
            },
            train: TrainConfig { epochs: 200, patience: 25, ..TrainConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub base_n: usize,
    pub base_m: usize,
    pub doublings: usize,
    pub repeats: usize,
    pub model: ModelConfig,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base_n: 60,
            base_m: 90,
            doublings: 4,
            repeats: 5,
            model: ModelConfig { d: 32, layers: 2, dropout_rate: 0.0, ..ModelConfig::default() },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
}
