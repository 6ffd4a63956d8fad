//! TOML run configuration. Every section is optional; command-line flags
//! override file values.

use std::path::Path;

use graph_event_ensemble::evaluation::SyntheticSpec;
use graph_event_ensemble::ingestion::{SkipRule, TickSpec};
use graph_event_ensemble::pipeline::PipelineConfig;
use graph_event_ensemble::selection::Strategy;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub evaluation: EvalConfig,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default)]
    pub directed: bool,
    #[serde(default = "one")]
    pub tick_width: i64,
    pub origin: Option<i64>,
    /// Drop weekend buckets of daily ticks; the value is the weekday
    /// (0 = Monday) of bucket 0.
    pub skip_weekends: Option<i64>,
}

fn one() -> i64 {
    1
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            directed: false,
            tick_width: 1,
            origin: None,
            skip_weekends: None,
        }
    }
}

impl InputConfig {
    pub fn tick_spec(&self) -> TickSpec {
        TickSpec {
            width: self.tick_width,
            origin: self.origin,
            skip: self.skip_weekends.map(SkipRule::weekends),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Delay at which significance is judged.
    #[serde(default)]
    pub delay: usize,
    #[serde(default = "d_delay_max")]
    pub delay_max: usize,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_k_max")]
    pub k_max: usize,
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    /// Strategies compared by the noise sweep.
    #[serde(default = "d_strategies")]
    pub strategies: Vec<Strategy>,
}

fn d_delay_max() -> usize {
    5
}
fn d_trials() -> usize {
    100
}
fn d_k_max() -> usize {
    10
}
fn d_repeats() -> usize {
    5
}
fn d_strategies() -> Vec<Strategy> {
    vec![Strategy::Full, Strategy::Diverse, Strategy::Vertical, Strategy::Horizontal]
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            delay: 0,
            delay_max: d_delay_max(),
            trials: d_trials(),
            k_max: d_k_max(),
            repeats: d_repeats(),
            strategies: d_strategies(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
