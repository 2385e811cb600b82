//! Run configuration files and the shipped presets.

use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use alns_mip::acceptance::{AnnealingSchedule, Criterion};
use alns_mip::bandit::{self, Policy, RewardScheme};
use alns_mip::bnb::InitialBudget;
use alns_mip::destroy::OperatorSpec;
use alns_mip::engine::{ClockKind, SearchConfig};
use alns_mip::repair::{Backend, ExternalCommand};

/// Environment variable overriding the external solver command.
pub const EXTERNAL_SOLVER_ENV: &str = "BALANS_EXTERNAL_SOLVER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub portfolio: Vec<String>,
    pub policy: PolicyConfig,
    pub rewards: [f64; 4],
    pub acceptance: AcceptanceConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub budgets: Budgets,
    pub stop: StopConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum AcceptanceConfig {
    Hc,
    Sa { t0: f64, t_end: f64, step: f64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    #[default]
    Builtin,
    External { command: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub initial_s: f64,
    pub iteration_s: f64,
    pub lb_iteration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration_nodes: Option<u64>,
    /// Node budget of the reference solve used by `bench`.
    #[serde(default = "default_oracle_nodes")]
    pub oracle_nodes: u64,
}

fn default_oracle_nodes() -> u64 {
    1_000_000
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            initial_s: 20.0,
            iteration_s: 60.0,
            lb_iteration_s: 150.0,
            iteration_nodes: Some(5000),
            oracle_nodes: default_oracle_nodes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockConfig {
    #[default]
    Wall,
    Work,
}

fn seconds(name: &str, s: f64) -> Result<Duration> {
    if !(s > 0.0) || !s.is_finite() {
        bail!("{name} must be a positive number of seconds, got {s}");
    }
    Ok(Duration::from_secs_f64(s))
}

fn parse_policy(p: &PolicyConfig) -> Result<Policy> {
    let name = p.name.to_ascii_lowercase().replace(['-', ' '], "_");
    let policy = match name.as_str() {
        "e_greedy" | "epsilon_greedy" | "egreedy" => Policy::EpsilonGreedy {
            epsilon: p.epsilon.unwrap_or(Policy::DEFAULT_EPSILON),
        },
        "softmax" => Policy::Softmax {
            tau: p.tau.unwrap_or(Policy::DEFAULT_TAU),
        },
        "thompson" | "ts" | "thompson_sampling" => Policy::Thompson,
        _ => bail!("unknown policy {:?}; expected e-greedy, softmax or thompson", p.name),
    };
    Ok(policy)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Builds and validates the search configuration. The environment
    /// override for the external command is applied by the caller.
    pub fn to_search(&self) -> Result<SearchConfig> {
        let portfolio = self
            .portfolio
            .iter()
            .map(|l| l.parse::<OperatorSpec>().with_context(|| format!("portfolio entry {l:?}")))
            .collect::<Result<Vec<_>>>()?;
        let criterion = match self.acceptance {
            AcceptanceConfig::Hc => Criterion::HillClimbing,
            AcceptanceConfig::Sa { t0, t_end, step } => {
                Criterion::SimulatedAnnealing(AnnealingSchedule { t0, t_end, step })
            }
        };
        let backend = match &self.backend {
            BackendConfig::Builtin => Backend::Builtin,
            BackendConfig::External { command } => Backend::External(ExternalCommand::new(command.clone())?),
        };
        let b = &self.budgets;
        let config = SearchConfig {
            portfolio,
            policy: parse_policy(&self.policy)?,
            rewards: RewardScheme::new(self.rewards)?,
            criterion,
            backend,
            initial: InitialBudget {
                time_limit: seconds("budgets.initial_s", b.initial_s)?,
                ..InitialBudget::default()
            },
            iteration_time: seconds("budgets.iteration_s", b.iteration_s)?,
            lb_iteration_time: seconds("budgets.lb_iteration_s", b.lb_iteration_s)?,
            iteration_nodes: b.iteration_nodes,
            max_iterations: self.stop.iterations,
            max_time: self.stop.wall_time_s.map(|s| seconds("stop.wall_time_s", s)).transpose()?,
            clock: match self.clock {
                ClockConfig::Wall => ClockKind::Wall,
                ClockConfig::Work => ClockKind::Work,
            },
            seed: self.seed,
            ..SearchConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    /// Replaces the backend command when the override variable is set.
    pub fn apply_env(&mut self) {
        if let Ok(command) = std::env::var(EXTERNAL_SOLVER_ENV) {
            if !command.trim().is_empty() {
                self.backend = BackendConfig::External { command };
            }
        }
    }
}

/// Preset names: `desk`, `paper16` (same as `desk`), `paper-protocol`, and
/// every bandit preset crossed with `_hc` / `_sa`.
pub fn preset_names() -> Vec<String> {
    let mut out = vec!["desk".to_string(), "paper16".to_string(), "paper-protocol".to_string()];
    for p in bandit::PRESET_NAMES {
        out.push(format!("{p}_hc"));
        out.push(format!("{p}_sa"));
    }
    out
}

fn sa_default() -> AcceptanceConfig {
    let s = AnnealingSchedule::default();
    AcceptanceConfig::Sa {
        t0: s.t0,
        t_end: s.t_end,
        step: s.step,
    }
}

fn policy_config(policy: Policy) -> PolicyConfig {
    match policy {
        Policy::EpsilonGreedy { epsilon } => PolicyConfig {
            name: "e-greedy".into(),
            epsilon: Some(epsilon),
            tau: None,
        },
        Policy::Softmax { tau } => PolicyConfig {
            name: "softmax".into(),
            epsilon: None,
            tau: Some(tau),
        },
        Policy::Thompson => PolicyConfig {
            name: "thompson".into(),
            epsilon: None,
            tau: None,
        },
    }
}

pub fn preset(name: &str) -> Result<RunConfig> {
    let paper16: Vec<String> = OperatorSpec::paper16().iter().map(|s| s.label().to_string()).collect();
    let (ts, ts_rewards) = bandit::preset("TS_accept_same")?;
    let desk = RunConfig {
        portfolio: paper16,
        policy: policy_config(ts),
        rewards: ts_rewards.values(),
        acceptance: sa_default(),
        backend: BackendConfig::Builtin,
        budgets: Budgets::default(),
        stop: StopConfig {
            iterations: Some(200),
            wall_time_s: None,
        },
        seed: 0,
        clock: ClockConfig::Work,
    };
    match name {
        "desk" | "paper16" => return Ok(desk),
        "paper-protocol" => {
            return Ok(RunConfig {
                budgets: Budgets {
                    iteration_nodes: None,
                    ..Budgets::default()
                },
                stop: StopConfig {
                    iterations: None,
                    wall_time_s: Some(3600.0),
                },
                clock: ClockConfig::Wall,
                ..desk
            })
        }
        _ => {}
    }
    let (stem, acceptance) = if let Some(s) = name.strip_suffix("_hc") {
        (s, AcceptanceConfig::Hc)
    } else if let Some(s) = name.strip_suffix("_sa") {
        (s, sa_default())
    } else {
        bail!("unknown preset {name:?}; available: {}", preset_names().join(", "));
    };
    let (policy, rewards) =
        bandit::preset(stem).with_context(|| format!("available presets: {}", preset_names().join(", ")))?;
    Ok(RunConfig {
        policy: policy_config(policy),
        rewards: rewards.values(),
        acceptance,
        ..desk
    })
}
