//! Experiment configuration: one JSON document with a section per command.
//!
//! Every field has a default, so an empty object `{}` is a valid config and
//! each command runs its desk-scale reference setup out of the box. The
//! global CLI flags (`--seed`, `--mode`, `--epsilon`, `--out`) override the
//! matching fields of whichever command runs.

use std::path::PathBuf;

use framelet::frames::{DilationScale, SystemConfig, TransformMode, DEFAULT_CHEBYSHEV_DEGREE};
use framelet::{Error, Result};
use serde::{Deserialize, Serialize};

/// Graph source shared by all commands: either a graph JSON file or a
/// two-block stochastic block model drawn per seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSource {
    /// When set, load this graph JSON instead of generating an SBM.
    pub graph_path: Option<PathBuf>,
    pub nodes_per_block: usize,
    pub p_intra: f64,
    pub q_inter: f64,
}

impl Default for GraphSource {
    fn default() -> Self {
        Self { graph_path: None, nodes_per_block: 50, p_intra: 0.5, q_inter: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    pub max_layers: usize,
    /// EEConv variants to trace, one output file per value.
    pub epsilons: Vec<f64>,
    pub seed: u64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self { max_layers: 32, epsilons: vec![0.05, 0.1, 0.2], seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Homophily grid as `p/q` ratios with `q` held fixed.
    pub ratios: Vec<f64>,
    pub q_inter: f64,
    pub nodes_per_block: usize,
    pub seeds: Vec<u64>,
    /// Stack depths whose final-layer energies are recorded.
    pub depths: Vec<usize>,
    pub epsilon: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            ratios: vec![1.0, 2.0, 5.0, 10.0],
            q_inter: 0.1,
            nodes_per_block: 50,
            seeds: (0..20).collect(),
            depths: vec![3, 8],
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub depths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub hidden_dim: usize,
    pub epsilon: f64,
    pub dropout_rate: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    /// Attach per-layer energy histories for the first seed of every cell.
    pub record_energy: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            depths: vec![2, 8, 16, 32],
            seeds: vec![0, 1, 2, 3, 4],
            hidden_dim: 32,
            epsilon: 0.1,
            dropout_rate: 0.0,
            lr: 0.01,
            weight_decay: 5e-3,
            epochs: 300,
            train_frac: 0.6,
            val_frac: 0.2,
            record_energy: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformParams {
    pub seed: u64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self { seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self { epsilon: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingParams {
    pub node_counts: Vec<usize>,
    /// Median-of-this-many wall-clock samples per measurement.
    pub repeats: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for TimingParams {
    fn default() -> Self {
        Self { node_counts: vec![128, 256, 512, 1024], repeats: 5, feature_dim: 8, seed: 0 }
    }
}

/// Transform mode as it appears in config files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Exact,
    Chebyshev,
}

/// Top-level experiment configuration; JSON documents mirror this struct.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub mode: ModeArg,
    pub chebyshev_degree: usize,
    pub out_dir: PathBuf,
    pub trajectory: TrajectoryParams,
    pub sweep: SweepParams,
    pub train: TrainParams,
    pub transform: TransformParams,
    pub verify: VerifyParams,
    pub timing: TimingParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::default(),
            mode: ModeArg::Exact,
            chebyshev_degree: DEFAULT_CHEBYSHEV_DEGREE,
            out_dir: PathBuf::from("out"),
            trajectory: TrajectoryParams::default(),
            sweep: SweepParams::default(),
            train: TrainParams::default(),
            transform: TransformParams::default(),
            verify: VerifyParams::default(),
            timing: TimingParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The [`SystemConfig`] every command builds its analysis frame with.
    pub fn system_config(&self, scale: DilationScale) -> SystemConfig {
        let mode = match self.mode {
            ModeArg::Exact => TransformMode::Exact,
            ModeArg::Chebyshev => TransformMode::Chebyshev { degree: self.chebyshev_degree },
        };
        SystemConfig { num_scales: 2, scale, mode }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
            Ok(())
        };
        for &e in &self.trajectory.epsilons {
            nonneg("trajectory.epsilons", e)?;
        }
        nonneg("sweep.epsilon", self.sweep.epsilon)?;
        nonneg("train.epsilon", self.train.epsilon)?;
        nonneg("verify.epsilon", self.verify.epsilon)?;
        if self.trajectory.epsilons.is_empty() {
            return Err(Error::InvalidConfig("trajectory.epsilons must be non-empty".into()));
        }
        if self.sweep.seeds.is_empty() || self.train.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed lists must be non-empty".into()));
        }
        if self.sweep.ratios.is_empty() {
            return Err(Error::InvalidConfig("sweep.ratios must be non-empty".into()));
        }
        if self.sweep.depths.len() != 2 || self.sweep.depths[0] >= self.sweep.depths[1] {
            return Err(Error::InvalidConfig(
                "sweep.depths must be exactly [shallow, deep] with shallow < deep".into(),
            ));
        }
        if self.train.depths.is_empty() {
            return Err(Error::InvalidConfig("train.depths must be non-empty".into()));
        }
        if self.trajectory.max_layers == 0 {
            return Err(Error::InvalidConfig("trajectory.max_layers must be positive".into()));
        }
        if self.timing.node_counts.is_empty() || self.timing.repeats == 0 {
            return Err(Error::InvalidConfig("timing needs node counts and repeats".into()));
        }
        if self.chebyshev_degree == 0 {
            return Err(Error::InvalidConfig("chebyshev_degree must be positive".into()));
        }
        for r in &self.sweep.ratios {
            if *r <= 0.0 || self.sweep.q_inter * r > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "sweep ratio {r} with q = {} leaves [0, 1]",
                    self.sweep.q_inter
                )));
            }
        }
        Ok(())
    }
}
