//! Experiment configuration: a TOML file whose every key has a default, so an empty file is
//! a complete configuration. Unknown keys are rejected and range checks report every
//! violation at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost::CostConstants;
use crate::error::{Error, Result};
use crate::learner::SyntheticSpec;
use crate::sparse::PqiParams;
use crate::topology::{DurationModel, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TStarRule {
    /// First round whose mean vote reaches the threshold.
    #[default]
    Reaches,
    /// First round whose mean vote falls below the threshold.
    FallsBelow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_sigma")]
        blob_sigma: f64,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
    },
    Csv {
        path: PathBuf,
    },
}

fn default_classes() -> usize {
    SyntheticSpec::default().classes
}
fn default_dim() -> usize {
    SyntheticSpec::default().dim
}
fn default_samples() -> usize {
    SyntheticSpec::default().samples
}
fn default_sigma() -> f64 {
    SyntheticSpec::default().blob_sigma
}
fn default_center_scale() -> f64 {
    SyntheticSpec::default().center_scale
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        DatasetSpec::Synthetic {
            classes: s.classes,
            dim: s.dim,
            samples: s.samples,
            blob_sigma: s.blob_sigma,
            center_scale: s.center_scale,
        }
    }
}

impl DatasetSpec {
    pub fn synthetic(&self) -> Option<SyntheticSpec> {
        match *self {
            DatasetSpec::Synthetic {
                classes,
                dim,
                samples,
                blob_sigma,
                center_scale,
            } => Some(SyntheticSpec {
                classes,
                dim,
                samples,
                blob_sigma,
                center_scale,
            }),
            DatasetSpec::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionSpec {
    Dirichlet { alpha: f64 },
    Pathological { n_cls: usize },
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Dirichlet { alpha: 0.3 }
    }
}

/// Settings for the `schedule-analyze` Monte Carlo sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub iterations: usize,
    /// Neighborhood sizes to sweep; empty means the experiment's `neighbors`.
    pub m_values: Vec<usize>,
    /// Waiting thresholds to sweep; pairs with `N > M` are skipped.
    pub n_values: Vec<usize>,
    /// Also emit the `N = M` (unbounded waiting) line.
    pub n_equals_m: bool,
    /// Per-client duration model; unset means unit durations.
    pub duration: Option<DurationModel>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            m_values: Vec::new(),
            n_values: Vec::new(),
            n_equals_m: true,
            duration: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// K
    pub num_clients: usize,
    /// M
    pub neighbors: usize,
    /// N
    pub waiting_threshold: usize,
    /// T
    pub rounds: usize,
    /// E_l
    pub local_epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub initial_density: f64,
    pub target_sparsity: f64,
    pub delta_pr: f64,
    pub delta_v: f64,
    pub b: f64,
    pub c: f64,
    pub pqi: PqiParams,
    pub rigl_alpha: f64,
    pub further_pruning: bool,
    pub tstar_rule: TStarRule,
    pub topology: Topology,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub holdout_fraction: f64,
    pub cost: CostConstants,
    pub price_time: f64,
    pub price_energy: f64,
    pub theta_grid: Vec<f64>,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_clients: 100,
            neighbors: 10,
            waiting_threshold: 10,
            rounds: 500,
            local_epochs: 5,
            lr: 0.1,
            lr_decay: 0.998,
            weight_decay: 5e-4,
            batch_size: 128,
            hidden: 64,
            initial_density: 0.5,
            target_sparsity: 0.8,
            delta_pr: 0.02,
            delta_v: 0.5,
            b: 0.0,
            c: 1.3,
            pqi: PqiParams::default(),
            rigl_alpha: 0.05,
            further_pruning: true,
            tstar_rule: TStarRule::Reaches,
            topology: Topology::Random,
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            holdout_fraction: 0.2,
            cost: CostConstants::default(),
            price_time: 1.0,
            price_energy: 1.0,
            theta_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            analysis: AnalysisConfig::default(),
        }
    }
}

fn req(v: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        v.push(msg);
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, fills defaults and validates. Relative dataset paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let DatasetSpec::Csv { path: data } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every range violation, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        req(
            &mut v,
            self.num_clients >= 2,
            format!("num_clients (K = {}) must be at least 2", self.num_clients),
        );
        req(
            &mut v,
            self.neighbors >= 1 && self.neighbors < self.num_clients.max(1),
            format!(
                "neighbors (M = {}) must satisfy 1 <= M <= num_clients - 1 (K = {})",
                self.neighbors, self.num_clients
            ),
        );
        req(
            &mut v,
            self.waiting_threshold <= self.neighbors,
            format!(
                "waiting_threshold (N = {}) must not exceed neighbors (M = {})",
                self.waiting_threshold, self.neighbors
            ),
        );
        if self.topology == Topology::FullyConnected {
            req(
                &mut v,
                self.neighbors + 1 == self.num_clients,
                format!(
                    "topology fully-connected requires neighbors = num_clients - 1 (M = {}, K = {})",
                    self.neighbors, self.num_clients
                ),
            );
        }
        req(
            &mut v,
            self.rounds >= 1,
            format!("rounds (T = {}) must be at least 1", self.rounds),
        );
        req(
            &mut v,
            self.lr.is_finite() && self.lr > 0.0,
            format!("lr = {} must be positive", self.lr),
        );
        req(
            &mut v,
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            format!("lr_decay = {} must lie in (0, 1]", self.lr_decay),
        );
        req(
            &mut v,
            self.weight_decay.is_finite() && self.weight_decay >= 0.0,
            format!("weight_decay = {} must be non-negative", self.weight_decay),
        );
        req(
            &mut v,
            self.batch_size >= 1,
            format!("batch_size = {} must be at least 1", self.batch_size),
        );
        req(
            &mut v,
            self.hidden >= 1,
            format!("hidden = {} must be at least 1", self.hidden),
        );
        req(
            &mut v,
            self.initial_density > 0.0 && self.initial_density <= 1.0,
            format!("initial_density = {} must lie in (0, 1]", self.initial_density),
        );
        req(
            &mut v,
            (0.0..1.0).contains(&self.target_sparsity),
            format!("target_sparsity = {} must lie in [0, 1)", self.target_sparsity),
        );
        req(
            &mut v,
            self.delta_pr.is_finite() && self.delta_pr > 0.0,
            format!("delta_pr = {} must be positive", self.delta_pr),
        );
        req(
            &mut v,
            (0.0..=1.0).contains(&self.delta_v),
            format!("delta_v = {} must lie in [0, 1]", self.delta_v),
        );
        req(
            &mut v,
            self.b.is_finite() && self.b >= 0.0,
            format!("b = {} must be non-negative", self.b),
        );
        req(
            &mut v,
            self.c.is_finite() && self.c > 0.0,
            format!("c = {} must be positive", self.c),
        );
        if let Err(e) = self.pqi.validate() {
            v.push(format!("pqi: {e}"));
        }
        req(
            &mut v,
            (0.0..=1.0).contains(&self.rigl_alpha),
            format!("rigl_alpha = {} must lie in [0, 1]", self.rigl_alpha),
        );
        req(
            &mut v,
            (0.0..1.0).contains(&self.holdout_fraction),
            format!("holdout_fraction = {} must lie in [0, 1)", self.holdout_fraction),
        );
        match &self.dataset {
            DatasetSpec::Synthetic {
                classes,
                dim,
                samples,
                blob_sigma,
                center_scale,
            } => {
                req(
                    &mut v,
                    *classes >= 2,
                    format!("dataset.classes = {classes} must be at least 2"),
                );
                req(&mut v, *dim >= 1, format!("dataset.dim = {dim} must be at least 1"));
                req(
                    &mut v,
                    *samples >= self.num_clients,
                    format!(
                        "dataset.samples = {samples} must be at least num_clients = {}",
                        self.num_clients
                    ),
                );
                req(
                    &mut v,
                    blob_sigma.is_finite() && *blob_sigma >= 0.0,
                    format!("dataset.blob_sigma = {blob_sigma} must be non-negative"),
                );
                req(
                    &mut v,
                    center_scale.is_finite() && *center_scale > 0.0,
                    format!("dataset.center_scale = {center_scale} must be positive"),
                );
            }
            DatasetSpec::Csv { path } => {
                req(
                    &mut v,
                    path.exists(),
                    format!("dataset.path {} does not exist", path.display()),
                );
            }
        }
        match self.partition {
            PartitionSpec::Dirichlet { alpha } => req(
                &mut v,
                alpha.is_finite() && alpha > 0.0,
                format!("partition.alpha = {alpha} must be positive"),
            ),
            PartitionSpec::Pathological { n_cls } => {
                req(
                    &mut v,
                    n_cls >= 1,
                    format!("partition.n_cls = {n_cls} must be at least 1"),
                );
                if let Some(s) = self.dataset.synthetic() {
                    req(
                        &mut v,
                        n_cls <= s.classes,
                        format!("partition.n_cls = {n_cls} exceeds dataset.classes = {}", s.classes),
                    );
                    req(
                        &mut v,
                        n_cls * self.num_clients >= s.classes,
                        format!(
                            "partition.n_cls * num_clients = {} cannot cover dataset.classes = {}",
                            n_cls * self.num_clients,
                            s.classes
                        ),
                    );
                }
            }
        }
        if let Err(e) = self.cost.validate() {
            v.push(format!("cost: {e}"));
        }
        req(
            &mut v,
            self.price_time >= 0.0 && self.price_energy >= 0.0,
            "price_time and price_energy must be non-negative".to_string(),
        );
        req(
            &mut v,
            !self.theta_grid.is_empty() && self.theta_grid.iter().all(|t| (0.0..=1.0).contains(t)),
            "theta_grid must be a non-empty list of values in [0, 1]".to_string(),
        );
        req(
            &mut v,
            self.analysis.iterations >= 1,
            "analysis.iterations must be at least 1".to_string(),
        );
        if let Some(d) = &self.analysis.duration {
            if let Err(e) = d.validate() {
                v.push(format!("analysis.duration: {e}"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Applies the `SEED` environment variable, the only supported env override.
    pub fn apply_env_seed(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var("SEED") {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("SEED = {raw:?} is not an unsigned integer")))?;
        }
        Ok(())
    }
}
