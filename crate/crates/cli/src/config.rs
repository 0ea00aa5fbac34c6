//! Run configuration: a single TOML file per run, with CLI flags overriding
//! individual keys. Every resolved config is hashed into the report sidecar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skg_core::chain::{ChainTargets, NestedChain};
use skg_core::protocol::{GaussianSourceModel, QuantizerConfig};
use skg_core::rng::stream;

use crate::CliError;

pub const TAG_CHAIN: u64 = 1;
pub const TAG_ROUND: u64 = 2;
pub const TAG_FLATNESS: u64 = 3;
pub const TAG_CODE: u64 = 4;
pub const TAG_DIVERGENCE: u64 = 5;
pub const TAG_PAIR: u64 = 6;
pub const TAG_SCAN: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Reliability,
    Uniformity,
    Leakage,
    Tradeoff,
    FlatnessScan,
    Resolvability,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Reliability => "reliability",
            ExperimentKind::Uniformity => "uniformity",
            ExperimentKind::Leakage => "leakage",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::FlatnessScan => "flatness",
            ExperimentKind::Resolvability => "resolvability",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub rho_xy: f64,
    pub rho_xz: f64,
    pub rho_yz: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            sigma_x: 3.0,
            sigma_y: 3.0,
            sigma_z: 3.0,
            rho_xy: 0.9999,
            rho_xz: 0.5,
            rho_yz: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub n: usize,
    pub targets: [f64; 3],
    /// Stream index for chain sampling, independent of the run seed so that
    /// the same chain can be reused across experiments.
    pub seed: u64,
    /// Optional explicit prime overriding the n^(3/2) scaling rule.
    pub p: Option<u64>,
    /// Load a serialized chain instead of building one.
    pub file: Option<PathBuf>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { n: 4, targets: [0.05, 0.2, 0.8], seed: 8, p: None, file: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizerSection {
    pub sigma_q: f64,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        QuantizerSection { sigma_q: 0.30 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformitySection {
    /// Monte-Carlo budget for each flatness estimate in the bound.
    pub flatness_samples: u64,
}

impl Default for UniformitySection {
    fn default() -> Self {
        UniformitySection { flatness_samples: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageSection {
    /// Number of (z, u) pairs averaged.
    pub pairs: u64,
    /// Gaussian nodes in the posterior integral.
    pub posterior_nodes: usize,
    pub flatness_samples: u64,
}

impl Default for LeakageSection {
    fn default() -> Self {
        LeakageSection { pairs: 400, posterior_nodes: 4096, flatness_samples: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeoffSection {
    pub r_p_max: f64,
    pub points: usize,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        TradeoffSection { r_p_max: 20.0, points: 40 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanFamily {
    /// Scaled integer lattices (alpha Z)^n.
    Zn,
    /// The three members of the configured Construction-A chain.
    Chain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessScanSection {
    pub family: ScanFamily,
    pub dims: Vec<u32>,
    pub alpha: f64,
    /// Log-spaced volume-to-noise grid over [pi, 4 pi e].
    pub gamma_points: usize,
    pub l1_samples: u64,
    pub kl_samples: u64,
}

impl Default for FlatnessScanSection {
    fn default() -> Self {
        FlatnessScanSection {
            family: ScanFamily::Zn,
            dims: vec![1, 2, 4, 8],
            alpha: 1.0,
            gamma_points: 12,
            l1_samples: 20_000,
            kl_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvabilitySection {
    pub n_list: Vec<usize>,
    /// Code dimension per block.
    pub k: usize,
    /// Rate gap delta0; the noise level is derived from it per n.
    pub delta0: f64,
    pub num_codes: u64,
    pub samples_per_code: u64,
    /// Add a k = n control row per n (divergence should vanish).
    pub include_full_code_control: bool,
    /// rho grid for the best-exponent sweep recorded in the sidecar.
    pub rho_grid_points: usize,
}

impl Default for ResolvabilitySection {
    fn default() -> Self {
        ResolvabilitySection {
            n_list: vec![2, 4, 6],
            k: 1,
            delta0: 0.55,
            num_codes: 32,
            samples_per_code: 6_000,
            include_full_code_control: true,
            rho_grid_points: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must match the subcommand when present.
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub uniformity: UniformitySection,
    #[serde(default)]
    pub leakage: LeakageSection,
    #[serde(default)]
    pub tradeoff: TradeoffSection,
    #[serde(default)]
    pub flatness_scan: FlatnessScanSection,
    #[serde(default)]
    pub resolvability: ResolvabilitySection,
}

fn default_seed() -> u64 {
    1
}

fn default_samples() -> u64 {
    100_000
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(ExperimentConfig {
                seed: default_seed(),
                samples: default_samples(),
                ..Default::default()
            }),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("parsing {}: {e}", p.display())))
            }
        }
    }

    pub fn validate(&self, kind: ExperimentKind) -> Result<(), CliError> {
        if let Some(declared) = self.experiment {
            if declared != kind {
                return Err(CliError::Config(format!(
                    "config declares experiment '{}' but subcommand is '{}'",
                    declared.name(),
                    kind.name()
                )));
            }
        }
        if self.samples < 100 {
            return Err(CliError::Config("samples must be at least 100".into()));
        }
        if self.tradeoff.points == 0
            || self.flatness_scan.gamma_points == 0
            || self.flatness_scan.dims.is_empty()
            || self.resolvability.n_list.is_empty()
        {
            return Err(CliError::Config("grids must be nonempty".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved config. The output
    /// path is not part of the experiment and is excluded, so identical runs
    /// writing to different files report the same hash.
    pub fn hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.out = None;
        let canonical = serde_json::to_string(&hashed).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn model(&self) -> Result<GaussianSourceModel, CliError> {
        GaussianSourceModel::new(
            self.source.sigma_x,
            self.source.sigma_y,
            self.source.sigma_z,
            self.source.rho_xy,
            self.source.rho_xz,
            self.source.rho_yz,
        )
        .map_err(CliError::from)
    }

    pub fn build_chain(&self) -> Result<NestedChain, CliError> {
        if let Some(file) = &self.chain.file {
            let text = std::fs::read_to_string(file)
                .map_err(|e| CliError::Config(format!("reading {}: {e}", file.display())))?;
            return NestedChain::from_json(&text).map_err(CliError::from);
        }
        let targets =
            ChainTargets::new(self.chain.targets[0], self.chain.targets[1], self.chain.targets[2])
                .map_err(CliError::from)?;
        let mut rng = stream(self.chain.seed, TAG_CHAIN, 0);
        match self.chain.p {
            Some(p) => NestedChain::build_with_prime(self.chain.n, p, targets, &mut rng)
                .map_err(CliError::from),
            None => NestedChain::build(self.chain.n, targets, &mut rng).map_err(CliError::from),
        }
    }

    pub fn quantizer(&self, model: &GaussianSourceModel) -> Result<QuantizerConfig, CliError> {
        QuantizerConfig::new(model, self.quantizer.sigma_q).map_err(CliError::from)
    }
}
