//! Experiment configuration files.

use std::path::{Path, PathBuf};

use censorlab_core::mc::{SiteOrder, Statistic};
use censorlab_core::system::{EQ_TOL, INEQ_TOL};
use censorlab_core::{Error, GibbsSystem, ModelSpec, Result, ScheduleSpec};
use serde::{Deserialize, Serialize};

fn default_epsilon() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in model; exclusive with `model_file`.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// System file, resolved relative to the config file.
    #[serde(default)]
    pub model_file: Option<PathBuf>,
    #[serde(default)]
    pub schedules: Vec<ScheduleSpec>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub censoring: CensoringOptions,
    #[serde(default)]
    pub compare: CompareOptions,
    #[serde(default)]
    pub contraction: ContractionOptions,
    #[serde(default)]
    pub hanging: Option<HangingOptions>,
    #[serde(default)]
    pub mc: McOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub eq: f64,
    pub ineq: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { eq: EQ_TOL, ineq: INEQ_TOL }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoringOptions {
    /// Longest update sequence whose every subsequence is compared.
    pub max_length: usize,
    /// Longest sequence for the single-omission suite.
    pub omission_length: usize,
    /// Longest sequence generating the distributions of the lemma suite.
    pub lemma_length: usize,
    /// Length of random-scan runs compared under every censoring mask.
    pub random_length: usize,
}

impl Default for CensoringOptions {
    fn default() -> Self {
        Self { max_length: 5, omission_length: 6, lemma_length: 4, random_length: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    /// Cap on counted updates for each mixing time.
    pub cap: usize,
    /// Systematic order; identity when absent.
    pub permutation: Option<Vec<usize>>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { cap: 100_000, permutation: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionOptions {
    pub ell: usize,
    /// Contraction is certified when `γ` exceeds this.
    pub gamma_target: f64,
    /// Largest single-site update count searched inside a block.
    pub t_cap: usize,
    /// Floor on the per-block update count `t`; the derived lower bounds
    /// apply when absent.
    pub t_single: Option<usize>,
}

impl Default for ContractionOptions {
    fn default() -> Self {
        Self { ell: 2, gamma_target: 0.0, t_cap: 4096, t_single: None }
    }
}

/// Graph `G` with the hanging subgraph `H` given by its sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HangingOptions {
    pub n_sites: usize,
    pub edges: Vec<[usize; 2]>,
    pub h_sites: Vec<usize>,
    pub beta: f64,
    #[serde(default = "default_schedule_length")]
    pub schedule_length: usize,
    #[serde(default = "default_schedule_seeds")]
    pub schedule_seeds: Vec<u64>,
    #[serde(default = "default_js")]
    pub js: Vec<usize>,
    #[serde(default = "default_plus_js")]
    pub plus_js: Vec<usize>,
    #[serde(default = "default_hanging_cap")]
    pub cap: usize,
}

fn default_schedule_length() -> usize {
    12
}
fn default_schedule_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn default_js() -> Vec<usize> {
    vec![1, 4, 16, 64]
}
fn default_plus_js() -> Vec<usize> {
    vec![1, 4, 16]
}
fn default_hanging_cap() -> usize {
    2000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    #[default]
    Coalescence,
    Censoring,
    Scaling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McOptions {
    pub mode: McMode,
    pub order: SiteOrder,
    pub replicas: u64,
    pub max_steps: u64,
    pub checkpoint_every: u64,
    /// Censoring comparison: updates per run as a multiple of `|V|`.
    pub length_factor: usize,
    /// Probability that the censoring mask keeps a position.
    pub keep: f64,
    pub statistic: Statistic,
    /// Scaling: side lengths of the torus family built from `model`.
    pub sizes: Vec<usize>,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            mode: McMode::Coalescence,
            order: SiteOrder::RandomScan,
            replicas: 16,
            max_steps: 10_000_000,
            checkpoint_every: 0,
            length_factor: 4,
            keep: 0.5,
            statistic: Statistic::Magnetization,
            sizes: vec![8, 16, 32],
        }
    }
}

impl ExperimentConfig {
    /// Parses a config; relative `model_file` paths resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        if let (Some(base), Some(file)) = (base, cfg.model_file.as_mut()) {
            if file.is_relative() {
                *file = base.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Invalid(format!("epsilon must lie in (0,1), got {}", self.epsilon)));
        }
        if self.model.is_some() && self.model_file.is_some() {
            return Err(Error::Invalid("give either model or model_file, not both".into()));
        }
        if let Some(file) = &self.model_file {
            if !file.exists() {
                return Err(Error::Invalid(format!("model file {} does not exist", file.display())));
            }
        }
        Ok(())
    }

    pub fn build_system(&self) -> Result<GibbsSystem> {
        match (&self.model, &self.model_file) {
            (Some(spec), None) => spec.build(),
            (None, Some(file)) => GibbsSystem::load_json(&std::fs::read_to_string(file)?),
            _ => Err(Error::Invalid("config needs a model or a model_file".into())),
        }
    }
}
