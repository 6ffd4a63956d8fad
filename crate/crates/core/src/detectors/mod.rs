//! Base event detectors. Each maps a [`FeatureMatrix`] to one anomaly score
//! per tick (higher = more anomalous) and can attribute a tick to the nodes
//! most responsible for it.

mod ased;
pub mod count_models;
mod ebed;
mod maed;
mod ptsad;
mod spirit;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::FeatureMatrix;

pub use ased::{ased, ased_attribution};
pub use ebed::{ebed, ebed_attribution};
pub use maed::{maed, maed_attribution};
pub use ptsad::{ptsad, ptsad_attribution, ptsad_detailed, PtsadFit};
pub use spirit::{spirit, spirit_attribution, spirit_trace, SpiritParams, SpiritTrace};

/// Per-tick anomaly scores from one detector run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreList {
    pub id: String,
    pub scores: Vec<f64>,
    /// First tick with a defined score; earlier entries are 0.
    pub valid_from: usize,
}

impl ScoreList {
    pub fn new(id: impl Into<String>, scores: Vec<f64>, valid_from: usize) -> Result<Self> {
        let list = ScoreList {
            id: id.into(),
            scores,
            valid_from,
        };
        list.validate()?;
        Ok(list)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self.scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::validation(format!("score list {} has non-finite score {bad}", self.id)));
        }
        let warm = self.valid_from.min(self.scores.len());
        if self.scores[..warm].iter().any(|&s| s != 0.0) {
            return Err(Error::validation(format!(
                "score list {} has non-zero scores in its warm-up",
                self.id
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Scores of ticks at or after `valid_from`.
    pub fn valid_scores(&self) -> &[f64] {
        &self.scores[self.valid_from.min(self.scores.len())..]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tick", "score"])?;
        for (t, s) in self.scores.iter().enumerate() {
            w.write_record([t.to_string(), format_float(*s)])?;
        }
        w.flush().map_err(|e| Error::io("score csv", e))?;
        Ok(())
    }
}

/// Shortest round-trip representation, so CSV output is reproducible.
pub(crate) fn format_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        v.to_string()
    }
}

/// Nodes ordered by their share of responsibility for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub tick: usize,
    pub ranked_nodes: Vec<String>,
    pub responsibility: Vec<f64>,
}

impl Attribution {
    /// Sorts nodes by descending responsibility, ties by row index.
    pub(crate) fn from_values(tick: usize, node_ids: &[String], values: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        Attribution {
            tick,
            ranked_nodes: idx.iter().map(|&i| node_ids[i].clone()).collect(),
            responsibility: idx.iter().map(|&i| values[i]).collect(),
        }
    }
}

pub const DEFAULT_EBED_WINDOW: usize = 5;
pub const DEFAULT_ASED_THRESHOLD: f64 = 0.9;

fn default_window() -> usize {
    DEFAULT_EBED_WINDOW
}
fn default_threshold() -> f64 {
    DEFAULT_ASED_THRESHOLD
}
fn default_lambda() -> f64 {
    SpiritParams::default().lambda
}
fn default_low() -> f64 {
    SpiritParams::default().low
}
fn default_high() -> f64 {
    SpiritParams::default().high
}

/// A configured base detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Detector {
    Ebed {
        #[serde(default = "default_window")]
        window: usize,
    },
    Ptsad {
        /// Round non-integer features to counts instead of rejecting them.
        #[serde(default)]
        round: bool,
    },
    Spirit {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    Ased {
        #[serde(default = "default_threshold")]
        variance_threshold: f64,
    },
    Maed,
}

impl Detector {
    /// The five detectors with default parameters.
    pub fn defaults() -> Vec<Detector> {
        let sp = SpiritParams::default();
        vec![
            Detector::Ebed {
                window: DEFAULT_EBED_WINDOW,
            },
            Detector::Ptsad { round: false },
            Detector::Spirit {
                lambda: sp.lambda,
                low: sp.low,
                high: sp.high,
            },
            Detector::Ased {
                variance_threshold: DEFAULT_ASED_THRESHOLD,
            },
            Detector::Maed,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Ebed { .. } => "EBED",
            Detector::Ptsad { .. } => "PTSAD",
            Detector::Spirit { .. } => "SPIRIT",
            Detector::Ased { .. } => "ASED",
            Detector::Maed => "MAED",
        }
    }

    /// Component id for this detector applied to `f`, e.g. `EBED(win)`.
    pub fn component_id(&self, f: &FeatureMatrix) -> String {
        format!("{}({})", self.name(), f.feature.short())
    }

    pub fn run(&self, f: &FeatureMatrix) -> Result<ScoreList> {
        let mut list = match *self {
            Detector::Ebed { window } => ebed(f, window)?,
            Detector::Ptsad { round } => ptsad(f, round)?,
            Detector::Spirit { lambda, low, high } => spirit(f, SpiritParams { lambda, low, high })?,
            Detector::Ased { variance_threshold } => ased(f, variance_threshold)?,
            Detector::Maed => maed(f)?,
        };
        list.id = self.component_id(f);
        Ok(list)
    }

    pub fn attribute(&self, f: &FeatureMatrix, tick: usize) -> Result<Attribution> {
        match *self {
            Detector::Ebed { window } => ebed_attribution(f, window, tick),
            Detector::Ptsad { round } => ptsad_attribution(f, round, tick),
            Detector::Spirit { lambda, low, high } => {
                spirit_attribution(f, SpiritParams { lambda, low, high }, tick)
            }
            Detector::Ased { variance_threshold } => ased_attribution(f, variance_threshold, tick),
            Detector::Maed => maed_attribution(f, tick),
        }
    }
}

pub(crate) fn require_nodes(f: &FeatureMatrix) -> Result<()> {
    if f.num_nodes() == 0 || f.num_ticks() == 0 {
        return Err(Error::validation("feature matrix is empty"));
    }
    Ok(())
}

pub(crate) fn warmup_error(detector: &str, tick: usize, valid_from: usize) -> Error {
    Error::validation(format!(
        "{detector}: tick {tick} lies in the warm-up (scores start at tick {valid_from})"
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_must_be_zero() {
        assert!(ScoreList::new("x", vec![1.0, 0.0], 1).is_err());
        assert!(ScoreList::new("x", vec![0.0, 2.0], 1).is_ok());
        assert!(ScoreList::new("x", vec![f64::NAN], 0).is_err());
    }

    #[test]
    fn detector_config_parses_with_defaults() {
        let d: Detector = serde_json::from_str(r#"{"kind":"ebed"}"#).unwrap();
        assert_eq!(d, Detector::Ebed { window: 5 });
        let d: Detector = serde_json::from_str(r#"{"kind":"spirit","lambda":1.0}"#).unwrap();
        assert_eq!(
            d,
            Detector::Spirit {
                lambda: 1.0,
                low: 0.95,
                high: 0.98
            }
        );
    }

    #[test]
    fn attribution_orders_by_responsibility() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let a = Attribution::from_values(3, &ids, &[0.5, 2.0, 0.5]);
        assert_eq!(a.ranked_nodes, vec!["b", "a", "c"]);
        assert_eq!(a.responsibility, vec![2.0, 0.5, 0.5]);
    }
}
