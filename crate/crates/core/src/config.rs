//! Run configuration: one versioned JSON document per run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dynamics::{DeterministicMapModel, MapSpec};
use crate::error::{Error, Result};
use crate::kernel::content_hash;
use crate::linalg::Covariance;

pub const SCHEMA_VERSION: u32 = 1;
pub const MIN_NODES_PER_AXIS: usize = 51;

/// θ for the time dilution: a number, or "auto" for min(H₀/4, σ² ln 10⁶).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Theta {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Theta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Theta::Auto => s.serialize_str("auto"),
            Theta::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Theta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(t) if t == "auto" => Ok(Theta::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "theta must be a number or \"auto\", got \"{t}\""
            ))),
            Raw::Number(v) => Ok(Theta::Value(v)),
        }
    }
}

/// Monte Carlo budgets. A zero run count skips the Monte Carlo checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    /// Runs per committor estimate.
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Steps of the single trajectory written by `simulate`.
    #[serde(default = "default_steps")]
    pub steps: u64,
    /// Diluted-trace blocks n.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Runs of the diluted trace process.
    #[serde(default = "default_runs")]
    pub trace_runs: usize,
    /// Runs per start point for E_X(σ).
    #[serde(default = "default_ex_runs")]
    pub ex_runs: usize,
    /// Points per axis of the E_X(σ) start lattice.
    #[serde(default = "default_ex_lattice")]
    pub ex_lattice: usize,
}

fn default_runs() -> usize {
    10_000
}
fn default_steps() -> u64 {
    100_000
}
fn default_blocks() -> usize {
    20
}
fn default_ex_runs() -> usize {
    10_000
}
fn default_ex_lattice() -> usize {
    9
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            steps: default_steps(),
            blocks: default_blocks(),
            trace_runs: default_runs(),
            ex_runs: default_ex_runs(),
            ex_lattice: default_ex_lattice(),
        }
    }
}

/// Thresholds of the numerical checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Radius of the disc that must contain all but N eigenvalues.
    #[serde(default = "default_gap_threshold")]
    pub gap_threshold: f64,
    /// Target L of the uniform positivity check.
    #[serde(default = "default_l_target")]
    pub l_target: f64,
    /// Blocks n compared in the exact-matrix reduction check.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// η as a fraction of H₀.
    #[serde(default = "default_eta_fraction")]
    pub eta_fraction: f64,
    /// Relative change of H under refinement that triggers a warning.
    #[serde(default = "default_refinement_tolerance")]
    pub refinement_tolerance: f64,
}

fn default_gap_threshold() -> f64 {
    0.9
}
fn default_l_target() -> f64 {
    1.9
}
fn default_n_max() -> usize {
    50
}
fn default_eta_fraction() -> f64 {
    0.15
}
fn default_refinement_tolerance() -> f64 {
    0.05
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            gap_threshold: default_gap_threshold(),
            l_target: default_l_target(),
            n_max: default_n_max(),
            eta_fraction: default_eta_fraction(),
            refinement_tolerance: default_refinement_tolerance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub map: MapSpec,
    /// State dimension d.
    pub dim: usize,
    /// Noise covariance Σ.
    pub covariance: Vec<Vec<f64>>,
    /// Single noise level; commands that sweep use `sigma_sweep` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sweep: Option<Vec<f64>>,
    /// Box X, one [lo, hi] per axis.
    pub bounds: Vec<[f64; 2]>,
    pub nodes_per_axis: usize,
    /// Requested ball radius δ.
    pub delta: f64,
    #[serde(default)]
    pub theta: Theta,
    pub r_hop: f64,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub checks: CheckConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
}

fn default_workers() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_cache_dir() -> PathBuf {
    PathBuf::from(".metareduce-cache")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let map_dim = self.map.dim().map_err(|e| Error::Config(e.to_string()))?;
        if self.dim != map_dim {
            return bad(format!(
                "dim = {} but the map has dimension {map_dim}",
                self.dim
            ));
        }
        let mut numbers: Vec<(&str, f64)> = vec![("delta", self.delta), ("r_hop", self.r_hop)];
        numbers.extend(self.covariance.iter().flatten().map(|v| ("covariance", *v)));
        numbers.extend(self.bounds.iter().flatten().map(|v| ("bounds", *v)));
        if let Theta::Value(t) = self.theta {
            numbers.push(("theta", t));
        }
        let c = &self.checks;
        numbers.extend([
            ("checks.gap_threshold", c.gap_threshold),
            ("checks.l_target", c.l_target),
            ("checks.eta_fraction", c.eta_fraction),
            ("checks.refinement_tolerance", c.refinement_tolerance),
        ]);
        if let Some((name, v)) = numbers.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{name} must be finite, got {v}"));
        }
        let sigmas = self.sigmas();
        if sigmas.is_empty() {
            return bad("one of sigma or sigma_sweep is required".into());
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("sigma values must be finite and positive, got {s}"));
        }
        if self.nodes_per_axis < MIN_NODES_PER_AXIS {
            return bad(format!(
                "nodes_per_axis = {} is below the minimum {MIN_NODES_PER_AXIS}",
                self.nodes_per_axis
            ));
        }
        if !(self.delta > 0.0) || !(self.r_hop > 0.0) {
            return bad("delta and r_hop must be positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.covariance()?;
        Ok(())
    }

    /// The σ sweep if given, otherwise the single σ.
    pub fn sigmas(&self) -> Vec<f64> {
        match (&self.sigma_sweep, self.sigma) {
            (Some(s), _) if !s.is_empty() => s.clone(),
            (_, Some(s)) => vec![s],
            _ => vec![],
        }
    }

    /// σ for single-σ commands: `sigma`, or the first sweep value.
    pub fn primary_sigma(&self) -> f64 {
        self.sigma.unwrap_or_else(|| self.sigmas()[0])
    }

    pub fn covariance(&self) -> Result<Covariance> {
        Covariance::new(&self.covariance).map_err(|e| Error::Config(format!("covariance: {e}")))
    }

    pub fn model(&self, sigma: f64) -> Result<DeterministicMapModel> {
        DeterministicMapModel::new(
            self.map.clone(),
            self.bounds.clone(),
            self.covariance()?,
            sigma,
        )
    }

    /// 64-bit hash of the canonical serialization, as hex.
    pub fn hash(&self) -> String {
        content_hash(self)
    }
}
