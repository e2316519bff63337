//! Experiment configuration files.
//!
//! Every optional field is resolved to a concrete value at load time and the
//! resolved configuration is written back into the reports.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volcon_core::backward::DEFAULT_NODE_CAP;
use volcon_core::rates::DEFAULT_SLACK;
use volcon_core::{MapSystem, RateFamily, SystemKind};

use crate::error::{CliError, CliResult};

/// Extra orbit steps given to first-entry searches beyond the tree depth.
pub const FIRST_ENTRY_MARGIN: usize = 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    /// Exponent of the threshold sequence `a_n = e^{λn}`.
    pub lambda: f64,
    #[serde(default)]
    pub horizons: Horizons,
    #[serde(default)]
    pub samples: Samples,
    pub seed: Option<u64>,
    #[serde(default)]
    pub rates: RateOptions,
    #[serde(default)]
    pub backward: BackwardOptions,
    /// Not echoed into reports, so runs in different directories compare equal.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Horizons {
    /// Orbit horizon `H` for hitting times, concatenation and chains.
    pub orbit: usize,
    pub tree_depth: usize,
    pub node_cap: usize,
    /// Horizon for first-entry times of tree nodes; `tree_depth + 40` if unset.
    pub first_entry: Option<usize>,
}

impl Default for Horizons {
    fn default() -> Self {
        Self {
            orbit: 60,
            tree_depth: 14,
            node_cap: DEFAULT_NODE_CAP,
            first_entry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Samples {
    pub tails: u64,
    pub roots: u64,
    pub triples: u64,
    pub chains: u64,
}

impl Default for Samples {
    fn default() -> Self {
        Self {
            tails: 100_000,
            roots: 50,
            triples: 10_000,
            chains: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateOptions {
    pub gamma: Option<f64>,
    pub slack: Option<f64>,
    /// Replaces the derived backward rate.
    #[serde(rename = "override")]
    pub family: Option<RateFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackwardOptions {
    /// Growth-slope threshold; the backward rate constant if unset.
    pub beta_target: Option<f64>,
    pub window_start: usize,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            beta_target: None,
            window_start: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fills defaults and checks the invariants. Returns the built system.
    pub fn resolve(&mut self) -> CliResult<MapSystem> {
        let system = MapSystem::new(self.system)?;
        if self.seed.is_none() {
            return Err(CliError::Config("seed is required".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(CliError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        let h = &mut self.horizons;
        if h.orbit == 0 || h.tree_depth == 0 || h.node_cap == 0 || h.first_entry == Some(0) {
            return Err(CliError::Config("horizons must be positive".into()));
        }
        h.first_entry.get_or_insert(h.tree_depth + FIRST_ENTRY_MARGIN);
        if let Some(g) = self.rates.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(CliError::Config(format!("gamma override must lie in (0, 1), got {g}")));
            }
        }
        self.rates.slack.get_or_insert(DEFAULT_SLACK);
        if self.backward.window_start == 0 {
            return Err(CliError::Config("backward window must start at level 1 or later".into()));
        }
        Ok(system)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved configs carry a seed")
    }

    pub fn first_entry_horizon(&self) -> usize {
        self.horizons
            .first_entry
            .unwrap_or(self.horizons.tree_depth + FIRST_ENTRY_MARGIN)
    }
}

/// Seed of an independent sampling stage.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
