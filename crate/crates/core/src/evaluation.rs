//! Accuracy measurement: average precision with a detection delay, noise
//! injection, significance against random ensembles and a planted-event
//! graph generator.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::RankList;
use crate::detectors::ScoreList;
use crate::error::{Error, Result};
use crate::ingestion::{Edge, TemporalGraphSequence};
use crate::pipeline::{run_detectors, run_ensemble, PipelineConfig};
use crate::selection::Strategy;

/// SplitMix64 output for the `counter`-th state after `master`. Every seeded
/// step derives its seed this way from one master seed.
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master.wrapping_add(counter.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTruth {
    /// Sorted, distinct event ticks.
    pub event_ticks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<usize, String>>,
}

impl EventTruth {
    pub fn new(ticks: impl IntoIterator<Item = usize>) -> Result<Self> {
        let set: BTreeSet<usize> = ticks.into_iter().collect();
        if set.is_empty() {
            return Err(Error::validation("ground truth has no events"));
        }
        Ok(EventTruth {
            event_ticks: set.into_iter().collect(),
            labels: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(file)
    }

    /// One tick per line, optionally followed by `,label`. Blank lines and
    /// `#` comments are ignored.
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut ticks = BTreeSet::new();
        let mut labels = BTreeMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io("truth", e))?;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (tick, label) = match body.split_once(',') {
                Some((t, l)) => (t.trim(), Some(l.trim())),
                None => (body, None),
            };
            let tick: usize = tick.parse().map_err(|_| Error::Parse {
                line: i as u64 + 1,
                message: format!("`{tick}` is not a tick index"),
            })?;
            ticks.insert(tick);
            if let Some(l) = label.filter(|l| !l.is_empty()) {
                labels.insert(tick, l.to_string());
            }
        }
        let mut truth = EventTruth::new(ticks)?;
        if !labels.is_empty() {
            truth.labels = Some(labels);
        }
        Ok(truth)
    }

    /// Truth ticks widened to `[t - delay, t + delay]`, clipped to the series.
    pub fn expanded(&self, delay: usize, t_len: usize) -> Result<Vec<bool>> {
        let mut hit = vec![false; t_len];
        for &t in &self.event_ticks {
            if t >= t_len {
                return Err(Error::validation(format!("event tick {t} outside 0..{t_len}")));
            }
            for s in t.saturating_sub(delay)..=(t + delay).min(t_len - 1) {
                hit[s] = true;
            }
        }
        Ok(hit)
    }
}

/// How precision is summarized over the ranking.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    /// Mean precision at each positive's rank.
    #[default]
    Positional,
    /// Area under the PR curve with precision interpolated to the right.
    Interpolated,
}

pub fn average_precision(rank: &RankList, truth: &EventTruth, delay: usize) -> Result<f64> {
    average_precision_with(rank, truth, delay, ApMode::Positional)
}

pub fn average_precision_with(rank: &RankList, truth: &EventTruth, delay: usize, mode: ApMode) -> Result<f64> {
    rank.validate()?;
    let positive = truth.expanded(delay, rank.len())?;
    let total = positive.iter().filter(|&&p| p).count() as f64;
    let mut hits = 0usize;
    let mut curve = Vec::with_capacity(rank.len());
    let mut positional = 0.0;
    for (k, &t) in rank.order.iter().enumerate() {
        if positive[t] {
            hits += 1;
            positional += hits as f64 / (k + 1) as f64;
        }
        curve.push((hits as f64 / total, hits as f64 / (k + 1) as f64));
    }
    Ok(match mode {
        ApMode::Positional => positional / total,
        ApMode::Interpolated => {
            let mut best = 0.0f64;
            let mut area = 0.0;
            let mut next_recall = 1.0;
            for &(recall, precision) in curve.iter().rev() {
                area += (next_recall - recall) * best;
                best = best.max(precision);
                next_recall = recall;
            }
            area + next_recall * best
        }
    })
}

/// Average precision for every delay `0..=delay_max`.
pub fn ap_by_delay(rank: &RankList, truth: &EventTruth, delay_max: usize) -> Result<BTreeMap<usize, f64>> {
    (0..=delay_max)
        .map(|d| average_precision(rank, truth, d).map(|ap| (d, ap)))
        .collect()
}

/// Appends `k` lists, each a random permutation of a randomly chosen input
/// list's scores, tagged `noise-i`.
pub fn inject_noise(lists: &[ScoreList], k: usize, seed: u64) -> Result<Vec<ScoreList>> {
    if lists.is_empty() {
        return Err(Error::validation("noise injection needs at least one source list"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = lists.to_vec();
    for i in 0..k {
        let src = &lists[rng.gen_range(0..lists.len())];
        let mut scores = src.scores.clone();
        scores.shuffle(&mut rng);
        out.push(ScoreList::new(format!("noise-{i}"), scores, 0)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub delay: usize,
    pub ap_by_delay: BTreeMap<usize, f64>,
    /// Selective pipeline AP at `delay`.
    pub ap: f64,
    pub phase1_size: usize,
    pub phase2_size: usize,
    pub trials: usize,
    pub rand_mu: f64,
    pub rand_sigma: f64,
    /// `(ap - rand_mu) / rand_sigma`; absent when `rand_sigma` is zero.
    pub z_gain: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignificanceOptions {
    pub trials: usize,
    pub seed: u64,
    /// Delay at which the selective and random APs are compared.
    pub delay: usize,
    pub delay_max: usize,
}

impl Default for SignificanceOptions {
    fn default() -> Self {
        SignificanceOptions {
            trials: 100,
            seed: 0,
            delay: 0,
            delay_max: 5,
        }
    }
}

pub fn significance_vs_random(
    g: &TemporalGraphSequence,
    cfg: &PipelineConfig,
    truth: &EventTruth,
    opts: &SignificanceOptions,
) -> Result<EvalReport> {
    let components = run_detectors(g, cfg)?;
    significance_from_components(&components, cfg, truth, opts)
}

/// Runs the selective pipeline once, then `trials` random ensembles of the
/// same phase-1 and phase-2 sizes, each trial seeded from the master seed.
pub fn significance_from_components(
    components: &[ScoreList],
    cfg: &PipelineConfig,
    truth: &EventTruth,
    opts: &SignificanceOptions,
) -> Result<EvalReport> {
    if opts.trials < 2 {
        return Err(Error::validation("significance needs at least two random trials"));
    }
    let selective = run_ensemble(components.to_vec(), cfg)?;
    let ap = average_precision(&selective.final_ranks, truth, opts.delay)?;
    let (k1, k2) = (selective.phase1.selected.len(), selective.phase2.selected.len());
    let random_aps = (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let trial = PipelineConfig {
                strategy: Strategy::Random {
                    k: k1,
                    seed: derive_seed(opts.seed, 2 * i),
                },
                phase2_strategy: Some(Strategy::Random {
                    k: k2,
                    seed: derive_seed(opts.seed, 2 * i + 1),
                }),
                ..cfg.clone()
            };
            let report = run_ensemble(components.to_vec(), &trial)?;
            average_precision(&report.final_ranks, truth, opts.delay)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = random_aps.len() as f64;
    let mu = random_aps.iter().sum::<f64>() / n;
    let sigma = (random_aps.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(EvalReport {
        strategy: cfg.strategy.label().to_string(),
        delay: opts.delay,
        ap_by_delay: ap_by_delay(&selective.final_ranks, truth, opts.delay_max)?,
        ap,
        phase1_size: k1,
        phase2_size: k2,
        trials: opts.trials,
        rand_mu: mu,
        rand_sigma: sigma,
        z_gain: if sigma > 0.0 { Some((ap - mu) / sigma) } else { None },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub strategy: String,
    pub k: usize,
    pub mean_ap: f64,
}

/// Mean final AP per strategy and number `k` of shuffled lists over
/// `repeats` seeded noise draws. The lists for `k` are a prefix of those for
/// `k + 1` within a repeat.
pub fn noise_sweep(
    components: &[ScoreList],
    cfg: &PipelineConfig,
    truth: &EventTruth,
    strategies: &[Strategy],
    k_max: usize,
    repeats: usize,
    seed: u64,
    delay: usize,
) -> Result<Vec<NoiseRow>> {
    if repeats == 0 {
        return Err(Error::validation("noise sweep needs at least one repeat"));
    }
    let draws = (0..repeats as u64)
        .map(|r| inject_noise(components, k_max, derive_seed(seed, r)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(Strategy, usize)> = strategies
        .iter()
        .flat_map(|&s| (0..=k_max).map(move |k| (s, k)))
        .collect();
    jobs.par_iter()
        .map(|&(strategy, k)| {
            let run_cfg = cfg.clone().with_strategy(strategy);
            let mut total = 0.0;
            for lists in &draws {
                let report = run_ensemble(lists[..components.len() + k].to_vec(), &run_cfg)?;
                total += average_precision(&report.final_ranks, truth, delay)?;
            }
            Ok(NoiseRow {
                strategy: strategy.label().to_string(),
                k,
                mean_ap: total / repeats as f64,
            })
        })
        .collect()
}

/// Planted-clique benchmark parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "d_nodes")]
    pub nodes: usize,
    #[serde(default = "d_ticks")]
    pub ticks: usize,
    /// Number of randomly placed events (ignored when `event_ticks` is set).
    #[serde(default = "d_events")]
    pub events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_ticks: Option<Vec<usize>>,
    #[serde(default = "d_clique")]
    pub clique_size: usize,
    #[serde(default = "d_prob")]
    pub edge_prob: f64,
    #[serde(default = "d_weight")]
    pub max_weight: u32,
    /// Random events are placed in `[first_event, ticks - tail_margin)`, at
    /// least `min_gap` ticks apart.
    #[serde(default = "d_first")]
    pub first_event: usize,
    #[serde(default = "d_tail")]
    pub tail_margin: usize,
    #[serde(default = "d_gap")]
    pub min_gap: usize,
}

fn d_nodes() -> usize {
    100
}
fn d_ticks() -> usize {
    200
}
fn d_events() -> usize {
    10
}
fn d_clique() -> usize {
    10
}
fn d_prob() -> f64 {
    0.02
}
fn d_weight() -> u32 {
    3
}
fn d_first() -> usize {
    20
}
fn d_tail() -> usize {
    5
}
fn d_gap() -> usize {
    5
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: d_nodes(),
            ticks: d_ticks(),
            events: d_events(),
            event_ticks: None,
            clique_size: d_clique(),
            edge_prob: d_prob(),
            max_weight: d_weight(),
            first_event: d_first(),
            tail_margin: d_tail(),
            min_gap: d_gap(),
        }
    }
}

fn place_events(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if let Some(ticks) = &spec.event_ticks {
        if ticks.is_empty() {
            return Err(Error::validation("no planted events"));
        }
        if let Some(&bad) = ticks.iter().find(|&&t| t >= spec.ticks) {
            return Err(Error::validation(format!("event tick {bad} outside 0..{}", spec.ticks)));
        }
        return Ok(ticks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect());
    }
    if spec.events == 0 {
        return Err(Error::validation("no planted events"));
    }
    let hi = spec.ticks.saturating_sub(spec.tail_margin);
    let lo = spec.first_event;
    let gap = spec.min_gap.max(1);
    if lo >= hi || (hi - lo).div_ceil(gap) < spec.events {
        return Err(Error::validation(format!(
            "{} events {gap} ticks apart do not fit in [{lo}, {hi})",
            spec.events
        )));
    }
    // Rejection sampling over candidate sets, then a deterministic sweep.
    for _ in 0..1000 {
        let mut picked: Vec<usize> = Vec::with_capacity(spec.events);
        let mut candidates: Vec<usize> = (lo..hi).collect();
        candidates.shuffle(rng);
        for c in candidates {
            if picked.iter().all(|&p| p.abs_diff(c) >= gap) {
                picked.push(c);
                if picked.len() == spec.events {
                    picked.sort_unstable();
                    return Ok(picked);
                }
            }
        }
    }
    Ok((0..spec.events).map(|i| lo + i * gap).collect())
}

/// Undirected background graph with independent edges of probability
/// `edge_prob` and integer weights in `1..=max_weight`; at every event tick a
/// random `clique_size` node subset is fully connected on top.
pub fn make_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<(TemporalGraphSequence, EventTruth)> {
    if spec.nodes < 2 || spec.ticks < 2 {
        return Err(Error::validation("synthetic graphs need at least 2 nodes and 2 ticks"));
    }
    if spec.clique_size < 2 || spec.clique_size > spec.nodes {
        return Err(Error::validation(format!("clique size {} outside 2..={}", spec.clique_size, spec.nodes)));
    }
    if !(0.0..=1.0).contains(&spec.edge_prob) || spec.max_weight == 0 {
        return Err(Error::validation("edge probability must lie in [0, 1] and max weight be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = place_events(spec, &mut rng)?;
    let width = spec.nodes.to_string().len();
    let nodes: Vec<String> = (0..spec.nodes).map(|i| format!("n{i:0width$}")).collect();
    let mut snapshots = Vec::with_capacity(spec.ticks);
    for t in 0..spec.ticks {
        let mut weights: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for a in 0..spec.nodes as u32 {
            for b in a + 1..spec.nodes as u32 {
                if rng.gen_bool(spec.edge_prob) {
                    weights.insert((a, b), rng.gen_range(1..=spec.max_weight) as f64);
                }
            }
        }
        if events.binary_search(&t).is_ok() {
            let mut members = rand::seq::index::sample(&mut rng, spec.nodes, spec.clique_size).into_vec();
            members.sort_unstable();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    *weights.entry((a as u32, b as u32)).or_insert(0.0) += rng.gen_range(1..=spec.max_weight) as f64;
                }
            }
        }
        snapshots.push(
            weights
                .into_iter()
                .map(|((src, dst), weight)| Edge { src, dst, weight })
                .collect(),
        );
    }
    let g = TemporalGraphSequence {
        nodes,
        timestamps: (0..spec.ticks as i64).collect(),
        snapshots,
        directed: false,
    };
    g.validate()?;
    Ok((g, EventTruth::new(events)?))
}
