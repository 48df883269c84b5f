use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vcnvard::GibbsConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Nvard,
    Vcnvard,
    /// Per-dyad AR(1) and pooled panel regression.
    Baselines,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "nvard" => Some(ModelKind::Nvard),
            "vcnvard" => Some(ModelKind::Vcnvard),
            "baselines" => Some(ModelKind::Baselines),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub flows: Option<PathBuf>,
    pub node_covariates: Option<PathBuf>,
    pub dyad_covariates: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_models() -> Vec<ModelKind> {
    vec![ModelKind::Nvard, ModelKind::Vcnvard, ModelKind::Baselines]
}

fn default_varying() -> Vec<String> {
    vec!["intercept".into(), "distance".into()]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a fit/evaluate run needs. Loaded from TOML; command-line
/// flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataPaths,
    /// Nodes to keep, in panel order. All nodes (sorted) when absent.
    #[serde(default)]
    pub nodes: Option<Vec<String>>,
    /// Year of the initial matrix `Y_0`.
    pub initial_year: Option<i64>,
    /// Last training year.
    pub train_end: Option<i64>,
    /// Held-out year; must be the first year after `train_end`.
    pub test_year: Option<i64>,
    #[serde(default = "default_true")]
    pub log_transform: bool,
    /// Covariates to log-transform when `log_transform` is on. All when absent.
    #[serde(default)]
    pub log_covariates: Option<Vec<String>>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    /// Design-column labels whose coefficients drift in the time-varying model.
    #[serde(default = "default_varying")]
    pub varying: Vec<String>,
    #[serde(default)]
    pub gibbs: GibbsConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Single source of randomness; replaces `gibbs.seed`.
    #[serde(default)]
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataPaths::default(),
            nodes: None,
            initial_year: None,
            train_end: None,
            test_year: None,
            log_transform: true,
            log_covariates: None,
            models: default_models(),
            varying: default_varying(),
            gibbs: GibbsConfig::default(),
            output: default_output(),
            seed: 0,
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parse a TOML file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        rebase(base, &mut cfg.data.flows);
        rebase(base, &mut cfg.data.node_covariates);
        rebase(base, &mut cfg.data.dyad_covariates);
        rebase(base, &mut cfg.data.weights);
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn gibbs_config(&self) -> GibbsConfig {
        GibbsConfig {
            seed: self.seed,
            ..self.gibbs.clone()
        }
    }

    pub fn flows_path(&self) -> Result<&Path> {
        self.data
            .flows
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("no flows file configured".into()))
    }

    /// `(initial_year, train_end, test_year)`.
    pub fn years(&self) -> Result<(i64, i64, i64)> {
        let get = |v: Option<i64>, name: &str| {
            v.ok_or_else(|| Error::InvalidArgument(format!("`{name}` is not configured")))
        };
        let initial = get(self.initial_year, "initial_year")?;
        let end = get(self.train_end, "train_end")?;
        let test = get(self.test_year, "test_year")?;
        if !(initial < end && end < test) {
            return Err(Error::InvalidArgument(format!(
                "need initial_year < train_end < test_year, got {initial}, {end}, {test}"
            )));
        }
        Ok((initial, end, test))
    }

    pub fn runs(&self, kind: ModelKind) -> bool {
        self.models.contains(&kind)
    }
}
