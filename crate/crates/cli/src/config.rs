//! Run configuration: a JSON file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use rdp_forge::environments::EnvParams;
use rdp_forge::languages::parse_family_spec;
use rdp_forge::metrics::{CmsParams, StoreKind, TesterConfig, TesterKind};

use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 1;

/// Options shared by every subcommand. Unset values fall back to the
/// config file, then to per-command defaults.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// JSON file with any of these options; flags take precedence.
    #[arg(long, value_name = "PATH")]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// corridor, tmaze, cookie, cheese or minihall.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,
    /// Number of episodes to generate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Corridor columns or T-maze corridor length.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// prefix, cms or lang.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tester: Option<String>,
    /// Language family indices `i,j,k`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<String>,
    /// Suffix store: exact or sketch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub store: Option<String>,
    #[arg(long = "delta-c")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_c: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Longest prefix enumerated by the cms tester.
    #[arg(long = "depth-cap")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_cap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long = "in", value_name = "PATH")]
    #[serde(rename = "in", skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Learned RDP file for `eval`.
    #[arg(long, value_name = "PATH")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rdp: Option<PathBuf>,
    #[arg(long = "eval-n")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_n: Option<usize>,
    /// Wall-clock budget for learning, in seconds.
    #[arg(long = "budget-s")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    /// Loads `--config` if given and lays the flags over it.
    pub fn resolve(flags: &RunConfig) -> Result<RunConfig, CliError> {
        let mut cfg = match &flags.config {
            Some(p) => Self::from_file(p)?,
            None => RunConfig::default(),
        };
        overlay!(
            cfg, flags, env, n, horizon, length, delta, tester, family, store, delta_c, epsilon, depth_cap, seed,
            input, out, rdp, eval_n, budget_s
        );
        cfg.config = None;
        // echoed configs must be enough to rerun the command
        cfg.seed = Some(cfg.seed());
        Ok(cfg)
    }

    fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("--config {}: {e}", path.display())))
    }

    pub fn require_env(&self) -> Result<&str, CliError> {
        self.env.as_deref().ok_or_else(|| CliError::Validation("--env is required".into()))
    }

    pub fn require_path<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
        value.as_deref().ok_or_else(|| CliError::Validation(format!("{flag} is required")))
    }

    pub fn env_params(&self) -> EnvParams {
        EnvParams { horizon: self.horizon, length: self.length, ..Default::default() }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn tester_kind(&self) -> Result<TesterKind, CliError> {
        let name = self.tester.as_deref().unwrap_or("lang");
        TesterKind::parse(name)
            .ok_or_else(|| CliError::Validation(format!("--tester: expected prefix, cms or lang, got {name:?}")))
    }

    /// Tester settings; `default_family` applies when the language tester
    /// is chosen without `--family`.
    pub fn tester(&self, default_family: (usize, usize, usize)) -> Result<TesterConfig, CliError> {
        let kind = self.tester_kind()?;
        let mut t = TesterConfig::new(kind, self.delta.unwrap_or(0.05));
        if kind == TesterKind::Language {
            t.family = Some(match &self.family {
                Some(s) => parse_family_spec(s).map_err(|e| CliError::Validation(format!("--family: {e}")))?,
                None => default_family,
            });
        }
        t.store = match self.store.as_deref() {
            None => None,
            Some("exact") => Some(StoreKind::Exact),
            Some("sketch") => Some(StoreKind::Sketch),
            Some(other) => return Err(CliError::Validation(format!("--store: expected exact or sketch, got {other:?}"))),
        };
        t.cms = CmsParams { delta_c: self.delta_c, epsilon: self.epsilon, depth_cap: self.depth_cap };
        t.seed = self.seed();
        t.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(t)
    }
}
