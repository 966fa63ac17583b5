//! TOML run configuration. Every section is optional; CLI flags override
//! file values, which override the defaults below.

use epinet::em::{EMConfig, Selection, DEFAULT_FLOOR, DEFAULT_GRID};
use epinet::evaluation::Resample;
use epinet::simulate::Latent;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: SimulateSection,
    pub data: DataSection,
    pub em: EMConfig,
    pub path: PathSection,
    pub select: Selection,
    pub fit: FitSection,
    pub bootstrap: BootstrapSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub p: usize,
    pub n: usize,
    pub k: usize,
    pub groups: usize,
    pub latent: Latent,
    pub alpha: f64,
    pub beta: f64,
    pub cut_quantiles: Option<Vec<f64>>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            p: 90,
            n: 360,
            k: 3,
            groups: 5,
            latent: Latent::Normal,
            alpha: 0.01,
            beta: 0.02,
            cut_quantiles: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Markers with a larger missing fraction are dropped before fitting.
    pub missing_cap: f64,
    /// Number of states shared by every marker; inferred when absent.
    pub states: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            missing_cap: 0.5,
            states: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub grid: usize,
    pub floor: f64,
    /// Explicit descending grid; overrides `grid` and `floor`.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            floor: DEFAULT_FLOOR,
            lambdas: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Copula,
    NpnTau,
    NpnNs,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Copula => "copula",
            Method::NpnTau => "npn-tau",
            Method::NpnNs => "npn-ns",
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub method: Method,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSection {
    pub replicates: usize,
    pub resample: Resample,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            replicates: 100,
            resample: Resample::WithReplacement,
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}
