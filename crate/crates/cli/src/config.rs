//! Run configuration: a TOML file with `model`, `payoff`, `contract`,
//! `method` and `output` sections. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use chaosdual_core::market::{BlackScholesParams, HestonParams, TimeGrid};
use chaosdual_core::optim::DescentConfig;
use chaosdual_core::payoff::{PayoffKind, PayoffSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// A scalar shared by all assets or one value per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAsset {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerAsset {
    fn expand(&self, dim: usize, field: &str) -> Result<Vec<f64>, CliError> {
        match self {
            PerAsset::Uniform(v) => Ok(vec![*v; dim]),
            PerAsset::Each(v) if v.len() == dim => Ok(v.clone()),
            PerAsset::Each(v) => Err(CliError::config(format!(
                "{field} has {} entries but model.assets = {dim}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    BlackScholes(BlackScholesConfig),
    Heston(HestonConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlackScholesConfig {
    pub assets: usize,
    pub spot: PerAsset,
    pub vol: PerAsset,
    #[serde(default = "zero_div")]
    pub div: PerAsset,
    pub rate: f64,
    #[serde(default)]
    pub corr: f64,
}

fn zero_div() -> PerAsset {
    PerAsset::Uniform(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonConfig {
    pub spot: f64,
    pub rate: f64,
    pub v0: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    pub kind: PayoffKind,
    /// Basket weights, default `1/d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub maturity: f64,
    pub strike: f64,
    /// Number of exercise steps after t = 0.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Maximum chaos degree.
    pub p: usize,
    /// Number of simulated paths.
    pub m: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 uses every available core.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tree_steps")]
    pub tree_steps: usize,
}

pub const DEFAULT_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_epsilon() -> f64 {
    1e-4
}

fn default_max_iters() -> usize {
    200
}

fn default_tree_steps() -> usize {
    9000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Toml,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
    /// CSV of accepted iterates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-text description of the benchmark this file reproduces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    pub model: ModelConfig,
    pub payoff: PayoffConfig,
    pub contract: ContractConfig,
    pub method: MethodConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub p: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Fully validated inputs for one run.
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: Model,
    pub payoff: PayoffSpec,
    pub grid: TimeGrid,
    pub degree: usize,
    pub paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub tree_steps: usize,
}

#[derive(Debug, Clone)]
pub enum Model {
    BlackScholes(BlackScholesParams),
    Heston(HestonParams),
}

impl Model {
    pub fn rate(&self) -> f64 {
        match self {
            Model::BlackScholes(p) => p.rate,
            Model::Heston(p) => p.rate,
        }
    }

    pub fn asset_dim(&self) -> usize {
        match self {
            Model::BlackScholes(p) => p.dim(),
            Model::Heston(_) => 1,
        }
    }

    pub fn brownian_dim(&self) -> usize {
        match self {
            Model::BlackScholes(p) => p.dim(),
            Model::Heston(_) => 2,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = o.p {
            self.method.p = p;
        }
        if let Some(n) = o.n {
            self.contract.n = n;
        }
        if let Some(m) = o.m {
            self.method.m = m;
        }
        if let Some(seed) = o.seed {
            self.method.seed = seed;
        }
        if let Some(t) = o.threads {
            self.method.threads = t;
        }
        if let Some(e) = o.epsilon {
            self.method.epsilon = e;
        }
        if let Some(out) = &o.out {
            self.output.report = Some(out.clone());
        }
    }

    /// Checks every precondition before any work starts.
    pub fn validate(&self) -> Result<Validated, CliError> {
        let method = &self.method;
        if method.m == 0 {
            return Err(CliError::config("method.m must be ≥ 1"));
        }
        if method.p == 0 {
            return Err(CliError::config("method.p must be ≥ 1"));
        }
        if self.contract.n == 0 {
            return Err(CliError::config("contract.n must be ≥ 1"));
        }
        if !(method.epsilon > 0.0) {
            return Err(CliError::config("method.epsilon must be > 0"));
        }
        if method.max_iters == 0 {
            return Err(CliError::config("method.max_iters must be ≥ 1"));
        }
        let grid = TimeGrid::new(self.contract.maturity, self.contract.n)
            .map_err(|e| CliError::config(format!("contract.maturity: {e}")))?;

        let model = match &self.model {
            ModelConfig::BlackScholes(bs) => {
                if bs.assets == 0 {
                    return Err(CliError::config("model.assets must be ≥ 1"));
                }
                let d = bs.assets;
                let params = BlackScholesParams::new(
                    bs.spot.expand(d, "model.spot")?,
                    bs.vol.expand(d, "model.vol")?,
                    bs.div.expand(d, "model.div")?,
                    bs.rate,
                    bs.corr,
                )
                .map_err(|e| CliError::config(format!("model: {e}")))?;
                Model::BlackScholes(params)
            }
            ModelConfig::Heston(h) => {
                let params = HestonParams {
                    spot: h.spot,
                    rate: h.rate,
                    v0: h.v0,
                    kappa: h.kappa,
                    theta: h.theta,
                    xi: h.xi,
                    rho: h.rho,
                };
                params
                    .validate()
                    .map_err(|e| CliError::config(format!("model: {e}")))?;
                Model::Heston(params)
            }
        };

        let dim = model.asset_dim();
        let weights = match (&self.payoff.weights, self.payoff.kind) {
            (Some(w), _) => w.clone(),
            (None, PayoffKind::BasketPut) => vec![1.0 / dim as f64; dim],
            (None, _) => Vec::new(),
        };
        let payoff = PayoffSpec::new(self.payoff.kind, self.contract.strike, weights)
            .map_err(|e| CliError::config(format!("payoff: {e}")))?;
        payoff
            .check_dim(dim)
            .map_err(|e| CliError::config(format!("payoff.weights: {e}")))?;

        Ok(Validated {
            model,
            payoff,
            grid,
            degree: method.p,
            paths: method.m,
            seed: method.seed,
            threads: method.threads,
            epsilon: method.epsilon,
            max_iters: method.max_iters,
            tree_steps: method.tree_steps,
        })
    }
}

impl Validated {
    pub fn descent(&self, anchor: f64) -> DescentConfig {
        DescentConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            ..DescentConfig::with_anchor(anchor)
        }
    }
}
