//! Two-phase selective ensemble: detectors, phase-1 selection, consensus,
//! phase-2 selection and the final inverse-rank combination.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{inverse_rank, run_consensus, ConsensusMethod, ConsensusOptions, ConsensusResult, RankList};
use crate::detectors::{Detector, ScoreList};
use crate::error::{Error, Result};
use crate::ingestion::{extract_features, FeatureKind, TemporalGraphSequence};
use crate::selection::{select_all, SelectionResult, Strategy};

fn default_features() -> Vec<FeatureKind> {
    vec![FeatureKind::WeightedDegree, FeatureKind::UnweightedDegree]
}

fn default_strategy() -> Strategy {
    Strategy::Horizontal
}

fn default_consensus() -> Vec<ConsensusMethod> {
    ConsensusMethod::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "Detector::defaults")]
    pub detectors: Vec<Detector>,
    #[serde(default = "default_features")]
    pub features: Vec<FeatureKind>,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Phase-2 strategy; the phase-1 strategy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase2_strategy: Option<Strategy>,
    #[serde(default = "default_consensus")]
    pub consensus: Vec<ConsensusMethod>,
    #[serde(default)]
    pub consensus_options: ConsensusOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            detectors: Detector::defaults(),
            features: default_features(),
            strategy: default_strategy(),
            phase2_strategy: None,
            consensus: default_consensus(),
            consensus_options: ConsensusOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self.phase2_strategy = None;
        self
    }

    pub fn phase2(&self) -> Strategy {
        self.phase2_strategy.unwrap_or(self.strategy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detectors.is_empty() || self.features.is_empty() {
            return Err(Error::config("at least one detector and one feature are required"));
        }
        if self.consensus.is_empty() {
            return Err(Error::config("the consensus set is empty"));
        }
        let mut seen = self.consensus.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.consensus.len() {
            return Err(Error::config("the consensus set lists a method twice"));
        }
        for s in [self.strategy, self.phase2()] {
            if let Strategy::Random { k: 0, .. } = s {
                return Err(Error::config("random strategy needs k >= 1"));
            }
        }
        Ok(())
    }
}

/// Wall-clock time per stage; not serialized so reports stay reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timing {
    pub detect: Duration,
    pub phase1: Duration,
    pub consensus: Duration,
    pub phase2: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub components: Vec<ScoreList>,
    pub phase1: SelectionResult,
    pub consensus: Vec<ConsensusResult>,
    pub phase2: SelectionResult,
    pub final_scores: Vec<f64>,
    pub final_ranks: RankList,
    #[serde(skip)]
    pub timing: Timing,
}

impl PipelineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let report: PipelineReport = serde_json::from_str(s)?;
        report.final_ranks.validate()?;
        Ok(report)
    }
}

/// Runs every detector on every feature. Output order is feature-major and
/// independent of scheduling.
pub fn run_detectors(g: &TemporalGraphSequence, cfg: &PipelineConfig) -> Result<Vec<ScoreList>> {
    cfg.validate()?;
    g.validate()?;
    let matrices = cfg
        .features
        .par_iter()
        .map(|&f| extract_features(g, f))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<_> = matrices
        .iter()
        .flat_map(|m| cfg.detectors.iter().map(move |d| (m, d)))
        .collect();
    jobs.par_iter()
        .map(|(m, d)| d.run(m).map_err(|e| Error::component(d.component_id(m), e)))
        .collect()
}

/// Horizontal selection needs two lists; with fewer the phase keeps everything.
fn select(strategy: Strategy, lists: &[ScoreList]) -> Result<SelectionResult> {
    if lists.len() < 2 && strategy == Strategy::Horizontal {
        log::warn!("horizontal selection over a single list; keeping it");
        let mut res = select_all(lists)?;
        res.strategy = "horizontal".into();
        res.fallback = true;
        return Ok(res);
    }
    strategy.select(lists)
}

/// Phases 2 to 5 over already computed component score lists.
pub fn run_ensemble(components: Vec<ScoreList>, cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.validate()?;
    if components.is_empty() {
        return Err(Error::validation("no component score lists"));
    }
    let start = Instant::now();
    let phase1 = select(cfg.strategy, &components)?;
    let chosen: Vec<ScoreList> = phase1.indices.iter().map(|&i| components[i].clone()).collect();
    let t_phase1 = start.elapsed();

    let start = Instant::now();
    let consensus = cfg
        .consensus
        .par_iter()
        .map(|&m| {
            run_consensus(m, &chosen, &cfg.consensus_options)
                .map_err(|e| Error::component(m.label(), e))
        })
        .collect::<Result<Vec<_>>>()?;
    let t_consensus = start.elapsed();

    let start = Instant::now();
    let consensus_scores: Vec<ScoreList> = consensus.iter().map(|c| c.scores.clone()).collect();
    let phase2 = select(cfg.phase2(), &consensus_scores)?;
    let final_inputs: Vec<RankList> = phase2.indices.iter().map(|&i| consensus[i].ranks.clone()).collect();
    let (final_scores, final_ranks) = inverse_rank(&final_inputs)?;
    let t_phase2 = start.elapsed();

    Ok(PipelineReport {
        components,
        phase1,
        consensus,
        phase2,
        final_scores,
        final_ranks,
        timing: Timing {
            detect: Duration::ZERO,
            phase1: t_phase1,
            consensus: t_consensus,
            phase2: t_phase2,
        },
    })
}

pub fn run_pipeline(g: &TemporalGraphSequence, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let start = Instant::now();
    let components = run_detectors(g, cfg)?;
    let detect = start.elapsed();
    let mut report = run_ensemble(components, cfg)?;
    report.timing.detect = detect;
    Ok(report)
}
