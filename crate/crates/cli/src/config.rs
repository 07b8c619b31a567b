//! Run configuration: a flat JSON file merged with command-line flags.
//!
//! Every key is optional in both sources. Flags win over the file, and
//! anything still missing falls back to a default when the configuration
//! is resolved.

use std::path::{Path, PathBuf};

use aoi_pomdp::model::{DEFAULT_DEPTH_EPS, DEFAULT_THETA};
use aoi_pomdp::multi::{budget_for_gamma, default_rates, MultiModel, MultiPolicy, DEFAULT_DEPTH_CAP};
use aoi_pomdp::sim::EpisodeConfig;
use aoi_pomdp::{Depth, ModelParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Truncation depth as written in a config: a number or `"auto"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthSetting {
    Fixed(usize),
    Named(String),
}

impl std::str::FromStr for DepthSetting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.parse::<usize>() {
            Ok(m) => Ok(DepthSetting::Fixed(m)),
            Err(_) if s == "auto" => Ok(DepthSetting::Named(s.to_string())),
            Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub battery: Option<usize>,
    pub delta_max: Option<usize>,
    pub m: Option<DepthSetting>,
    pub m_auto_eps: Option<f64>,
    pub theta: Option<f64>,
    pub seed: Option<u64>,
    pub slots: Option<usize>,
    pub episodes: Option<usize>,
    pub warmup: Option<usize>,
    pub gamma: Option<f64>,
    pub sensors: Option<usize>,
    pub budget: Option<usize>,
    pub rates: Option<Vec<f64>>,
    pub depth_cap: Option<usize>,
    pub policy: Option<Vec<String>>,
    pub sweep_param: Option<String>,
    pub sweep_values: Option<Vec<f64>>,
    pub trace_slots: Option<usize>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        RunConfig { $($field: $top.$field.or($base.$field)),* }
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// `self` with every key set in `flags` replaced.
    pub fn overlay(self, flags: RunConfig) -> RunConfig {
        overlay!(
            self, flags, lambda, p, battery, delta_max, m, m_auto_eps, theta, seed, slots, episodes, warmup, gamma,
            sensors, budget, rates, depth_cap, policy, sweep_param, sweep_values, trace_slots, out
        )
    }

    pub fn resolve(self) -> Result<Resolved, CliError> {
        let depth = match (&self.m, self.m_auto_eps) {
            (Some(DepthSetting::Fixed(_)), Some(_)) => {
                return Err(CliError::Config("`m` and `m_auto_eps` are mutually exclusive".into()))
            }
            (Some(DepthSetting::Fixed(m)), None) => Depth::Fixed(*m),
            (Some(DepthSetting::Named(s)), _) if s != "auto" => {
                return Err(CliError::Config(format!("`m`: expected a positive integer or \"auto\", got {s:?}")))
            }
            (_, eps) => Depth::Auto {
                eps: eps.unwrap_or(DEFAULT_DEPTH_EPS),
            },
        };
        let slots = self.slots.unwrap_or(1_000_000);
        let policies = self.policy.unwrap_or_default();
        let resolved = Resolved {
            params: ModelParams {
                lambda: self.lambda.unwrap_or(0.06),
                p: self.p.unwrap_or(0.8),
                battery: self.battery.unwrap_or(2),
                delta_max: self.delta_max.unwrap_or(64),
                depth,
                theta: self.theta.unwrap_or(DEFAULT_THETA),
            },
            episodes: EpisodeConfig {
                slots,
                episodes: self.episodes.unwrap_or(10),
                seed: self.seed.unwrap_or(0),
                warmup: self.warmup.unwrap_or(slots / 100),
            },
            gamma: self.gamma,
            sensors: self.sensors.unwrap_or(100),
            budget: self.budget,
            rates: self.rates,
            depth_cap: self.depth_cap.unwrap_or(DEFAULT_DEPTH_CAP),
            policies,
            sweep_param: self.sweep_param,
            sweep_values: self.sweep_values.unwrap_or_default(),
            trace_slots: self.trace_slots.unwrap_or(0),
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
        };
        resolved.params.validate()?;
        resolved.episodes.validate()?;
        Ok(resolved)
    }
}

/// Fully specified configuration, embedded in every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub params: ModelParams,
    pub episodes: EpisodeConfig,
    pub gamma: Option<f64>,
    pub sensors: usize,
    pub budget: Option<usize>,
    pub rates: Option<Vec<f64>>,
    pub depth_cap: usize,
    pub policies: Vec<String>,
    pub sweep_param: Option<String>,
    pub sweep_values: Vec<f64>,
    pub trace_slots: usize,
    #[serde(skip)]
    pub out: PathBuf,
}

/// Single-sensor policies known to `simulate` and `sweep`.
pub const SINGLE_POLICIES: [&str; 4] = ["pomdp", "greedy", "exact", "mle"];

impl Resolved {
    pub fn single_policies(&self) -> Result<Vec<String>, CliError> {
        if self.policies.is_empty() {
            return Ok(SINGLE_POLICIES.iter().map(|s| s.to_string()).collect());
        }
        for p in &self.policies {
            if !SINGLE_POLICIES.contains(&p.as_str()) {
                return Err(CliError::Config(format!(
                    "`policy`: unknown policy `{p}` (expected one of {})",
                    SINGLE_POLICIES.join(", ")
                )));
            }
        }
        Ok(self.policies.clone())
    }

    pub fn multi_policies(&self) -> Result<Vec<MultiPolicy>, CliError> {
        if self.policies.is_empty() {
            return Ok(MultiPolicy::ALL.to_vec());
        }
        self.policies
            .iter()
            .map(|p| {
                MultiPolicy::ALL.into_iter().find(|k| k.name() == p).ok_or_else(|| {
                    let names: Vec<&str> = MultiPolicy::ALL.iter().map(|k| k.name()).collect();
                    CliError::Config(format!("`policy`: unknown policy `{p}` (expected one of {})", names.join(", ")))
                })
            })
            .collect()
    }

    /// Network for `sensors` sensors; the budget comes from `budget` or `gamma`.
    pub fn multi_model(&self, sensors: usize, gamma: Option<f64>) -> Result<MultiModel, CliError> {
        let budget = match (self.budget, gamma) {
            (Some(n), _) if self.sweep_param.as_deref() != Some("gamma") => n,
            (_, Some(g)) if g > 0.0 && g <= 1.0 => budget_for_gamma(sensors, g),
            (_, Some(g)) => return Err(CliError::Config(format!("`gamma`: {g} is outside (0, 1]"))),
            (_, None) => budget_for_gamma(sensors, 0.15),
        };
        let rates = match &self.rates {
            Some(r) if r.len() == sensors => r.clone(),
            Some(r) => {
                return Err(CliError::Config(format!(
                    "`rates` has {} entries but there are {sensors} sensors",
                    r.len()
                )))
            }
            None => default_rates(sensors),
        };
        let params = self.params;
        let model = MultiModel {
            lambdas: rates,
            p: params.p,
            battery: params.battery,
            delta_max: params.delta_max,
            budget,
            depth: params.depth,
            depth_cap: Some(self.depth_cap),
            theta: params.theta,
        };
        model.validate()?;
        Ok(model)
    }
}
