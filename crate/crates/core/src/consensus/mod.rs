//! Consensus methods that merge several score or rank lists into one ranking.

mod kemeny;
mod rra;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::{mixture_model, unify, ProbList};
use crate::detectors::{format_float, ScoreList};
use crate::error::{Error, Result};

pub use kemeny::{kemeny_cost, kemeny_young, KemenyMode, EXACT_MAX_TICKS};
pub use rra::{rra, RraOutput};

/// Permutation of ticks from most to least anomalous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankList {
    pub order: Vec<usize>,
    /// Runs of ticks with equal scores (only runs longer than one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_groups: Option<Vec<Vec<usize>>>,
}

impl RankList {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let r = RankList {
            order,
            tie_groups: None,
        };
        r.validate()?;
        Ok(r)
    }

    /// Descending score; ties broken by ascending tick.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || scores[order[i]] != scores[order[start]] {
                if i - start > 1 {
                    groups.push(order[start..i].to_vec());
                }
                start = i;
            }
        }
        RankList {
            order,
            tie_groups: if groups.is_empty() { None } else { Some(groups) },
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.order.len()];
        for &t in &self.order {
            if t >= seen.len() || std::mem::replace(&mut seen[t], true) {
                return Err(Error::validation("rank list is not a permutation of its ticks"));
            }
        }
        Ok(())
    }

    /// 1-based rank of every tick.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &t) in self.order.iter().enumerate() {
            ranks[t] = pos + 1;
        }
        ranks
    }

    /// CSV rows `rank,tick,score` (rank 1-based).
    pub fn write_csv<W: Write>(&self, out: W, scores: &[f64]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rank", "tick", "score"])?;
        for (pos, &t) in self.order.iter().enumerate() {
            w.write_record([(pos + 1).to_string(), t.to_string(), format_float(scores[t])])?;
        }
        w.flush().map_err(|e| Error::io("rank csv", e))?;
        Ok(())
    }
}

pub(crate) fn common_len<I: IntoIterator<Item = usize>>(lens: I, what: &str) -> Result<usize> {
    let mut it = lens.into_iter();
    let Some(first) = it.next() else {
        return Err(Error::validation(format!("{what}: at least one input list is required")));
    };
    if it.any(|l| l != first) {
        return Err(Error::validation(format!("{what}: input lists cover different tick sets")));
    }
    Ok(first)
}

/// Mean of `1 / rank` across lists; returns the scores and the induced order.
pub fn inverse_rank(lists: &[RankList]) -> Result<(Vec<f64>, RankList)> {
    let t_len = common_len(lists.iter().map(RankList::len), "inverse rank")?;
    let mut scores = vec![0.0; t_len];
    for list in lists {
        list.validate()?;
        for (t, r) in list.ranks().into_iter().enumerate() {
            scores[t] += 1.0 / r as f64;
        }
    }
    let m = lists.len() as f64;
    scores.iter_mut().for_each(|s| *s /= m);
    let ranks = RankList::from_scores(&scores);
    Ok((scores, ranks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Avg,
    Max,
}

/// Average or maximum of calibrated probabilities per tick.
pub fn prob_aggregate(probs: &[ProbList], combiner: Combiner) -> Result<(Vec<f64>, RankList)> {
    let t_len = common_len(probs.iter().map(|p| p.probs.len()), "probability aggregation")?;
    let scores: Vec<f64> = (0..t_len)
        .map(|t| {
            let vals = probs.iter().map(|p| p.probs[t]);
            match combiner {
                Combiner::Avg => vals.sum::<f64>() / probs.len() as f64,
                Combiner::Max => vals.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let ranks = RankList::from_scores(&scores);
    Ok((scores, ranks))
}

/// The seven consensus techniques.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsensusMethod {
    InverseRank,
    KemenyYoung,
    Rra,
    UniAvg,
    UniMax,
    MmAvg,
    MmMax,
}

impl ConsensusMethod {
    pub const ALL: [ConsensusMethod; 7] = [
        ConsensusMethod::InverseRank,
        ConsensusMethod::KemenyYoung,
        ConsensusMethod::Rra,
        ConsensusMethod::UniAvg,
        ConsensusMethod::UniMax,
        ConsensusMethod::MmAvg,
        ConsensusMethod::MmMax,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConsensusMethod::InverseRank => "InvRank",
            ConsensusMethod::KemenyYoung => "Kemeny",
            ConsensusMethod::Rra => "RRA",
            ConsensusMethod::UniAvg => "Uni(avg)",
            ConsensusMethod::UniMax => "Uni(max)",
            ConsensusMethod::MmAvg => "MM(avg)",
            ConsensusMethod::MmMax => "MM(max)",
        }
    }

    fn key(self) -> &'static str {
        match self {
            ConsensusMethod::InverseRank => "inverse-rank",
            ConsensusMethod::KemenyYoung => "kemeny-young",
            ConsensusMethod::Rra => "rra",
            ConsensusMethod::UniAvg => "uni-avg",
            ConsensusMethod::UniMax => "uni-max",
            ConsensusMethod::MmAvg => "mm-avg",
            ConsensusMethod::MmMax => "mm-max",
        }
    }
}

impl fmt::Display for ConsensusMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ConsensusMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConsensusMethod::ALL
            .into_iter()
            .find(|m| m.key() == s || m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown consensus method `{s}`")))
    }
}

/// Options shared by the consensus methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsensusOptions {
    /// Largest tick count solved exactly by Kemeny-Young; larger inputs use the heuristic.
    #[serde(default = "default_exact_max")]
    pub kemeny_exact_max: usize,
    #[serde(default = "default_true")]
    pub rra_bonferroni: bool,
}

fn default_exact_max() -> usize {
    EXACT_MAX_TICKS
}
fn default_true() -> bool {
    true
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        ConsensusOptions {
            kemeny_exact_max: EXACT_MAX_TICKS,
            rra_bonferroni: true,
        }
    }
}

/// One consensus result, oriented so that higher scores are more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub method: ConsensusMethod,
    pub scores: ScoreList,
    pub ranks: RankList,
}

/// Runs one consensus method over a set of score lists.
pub fn run_consensus(
    method: ConsensusMethod,
    lists: &[ScoreList],
    opts: &ConsensusOptions,
) -> Result<ConsensusResult> {
    let t_len = common_len(lists.iter().map(ScoreList::len), method.label())?;
    let rank_lists = || lists.iter().map(|l| RankList::from_scores(&l.scores)).collect::<Vec<_>>();
    let (scores, ranks) = match method {
        ConsensusMethod::InverseRank => inverse_rank(&rank_lists())?,
        ConsensusMethod::KemenyYoung => {
            let mode = if t_len <= opts.kemeny_exact_max.min(EXACT_MAX_TICKS) {
                KemenyMode::Exact
            } else {
                KemenyMode::Heuristic
            };
            let ranks = kemeny_young(&rank_lists(), mode)?;
            // Positional score: T - rank.
            let scores = ranks.ranks().iter().map(|&r| (t_len - r) as f64).collect();
            (scores, ranks)
        }
        ConsensusMethod::Rra => {
            let out = rra(&rank_lists(), opts.rra_bonferroni)?;
            (out.rho.iter().map(|r| 1.0 - r).collect(), out.ranks)
        }
        ConsensusMethod::UniAvg | ConsensusMethod::UniMax => {
            let probs: Vec<ProbList> = lists.iter().map(unify).collect();
            let comb = if method == ConsensusMethod::UniAvg { Combiner::Avg } else { Combiner::Max };
            prob_aggregate(&probs, comb)?
        }
        ConsensusMethod::MmAvg | ConsensusMethod::MmMax => {
            let probs = lists.iter().map(mixture_model).collect::<Result<Vec<_>>>()?;
            let comb = if method == ConsensusMethod::MmAvg { Combiner::Avg } else { Combiner::Max };
            prob_aggregate(&probs, comb)?
        }
    };
    // Calibration and the RRA cap flatten many ticks to equal values; order
    // those by their mean inverse rank instead of by tick.
    let ranks = match method {
        ConsensusMethod::InverseRank | ConsensusMethod::KemenyYoung => ranks,
        _ if ranks.tie_groups.is_none() && method != ConsensusMethod::Rra => ranks,
        _ => {
            let (secondary, _) = inverse_rank(&rank_lists())?;
            let mut order: Vec<usize> = (0..t_len).collect();
            order.sort_by(|&a, &b| {
                scores[b]
                    .total_cmp(&scores[a])
                    .then(secondary[b].total_cmp(&secondary[a]))
                    .then(a.cmp(&b))
            });
            RankList {
                order,
                tie_groups: None,
            }
        }
    };
    Ok(ConsensusResult {
        method,
        scores: ScoreList::new(method.label(), scores, 0)?,
        ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rl(order: &[usize]) -> RankList {
        RankList::new(order.to_vec()).unwrap()
    }

    #[test]
    fn score_order_breaks_ties_by_tick() {
        let r = RankList::from_scores(&[1.0, 3.0, 3.0, 0.5]);
        assert_eq!(r.order, vec![1, 2, 0, 3]);
        assert_eq!(r.ranks(), vec![3, 1, 2, 4]);
        assert_eq!(r.tie_groups, Some(vec![vec![1, 2]]));
        assert!(RankList::new(vec![0, 0, 1]).is_err());
        assert!(RankList::new(vec![0, 3]).is_err());
    }

    #[test]
    fn inverse_rank_example() {
        // A=0, B=1, C=2.
        let (scores, order) = inverse_rank(&[rl(&[0, 1, 2]), rl(&[0, 1, 2]), rl(&[1, 0, 2])]).unwrap();
        let third = 1.0 / 3.0;
        assert!((scores[0] - 2.5 * third).abs() < 1e-15);
        assert!((scores[1] - 2.0 * third).abs() < 1e-15);
        assert!((scores[2] - 1.0 * third).abs() < 1e-15);
        assert_eq!(order.order, vec![0, 1, 2]);
    }

    #[test]
    fn inverse_rank_identity_and_mismatch() {
        let single = rl(&[2, 0, 3, 1]);
        assert_eq!(inverse_rank(&[single.clone()]).unwrap().1.order, single.order);
        assert!(inverse_rank(&[rl(&[0, 1]), rl(&[0, 1, 2])]).is_err());
        assert!(inverse_rank(&[]).is_err());
    }

    #[test]
    fn prob_aggregate_combiners() {
        let p = |v: Vec<f64>| ProbList {
            source_id: "p".into(),
            probs: v,
            labels: None,
        };
        let lists = [p(vec![0.2, 0.1]), p(vec![0.8, 0.0])];
        let (avg, _) = prob_aggregate(&lists, Combiner::Avg).unwrap();
        let (max, _) = prob_aggregate(&lists, Combiner::Max).unwrap();
        assert!((avg[0] - 0.5).abs() < 1e-15);
        assert_eq!(max[0], 0.8);
        let (one, _) = prob_aggregate(&lists[..1], Combiner::Max).unwrap();
        assert_eq!(one, vec![0.2, 0.1]);
    }

    #[test]
    fn unanimity_for_every_method() {
        let s: Vec<f64> = (0..20).map(|t| ((t * 7) % 11) as f64 + if t == 3 { 30.0 } else { 0.0 }).collect();
        let lists: Vec<ScoreList> = (0..4).map(|k| ScoreList::new(format!("c{k}"), s.clone(), 0).unwrap()).collect();
        let expect = RankList::from_scores(&s).order;
        for m in ConsensusMethod::ALL {
            let out = run_consensus(m, &lists, &ConsensusOptions::default()).unwrap();
            assert_eq!(out.ranks.order, expect, "{m}");
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in ConsensusMethod::ALL {
            assert_eq!(m.to_string().parse::<ConsensusMethod>().unwrap(), m);
            assert_eq!(m.label().parse::<ConsensusMethod>().unwrap(), m);
        }
    }

    #[test]
    fn every_method_returns_a_permutation() {
        let lists: Vec<ScoreList> = (0..3)
            .map(|k| {
                let s = (0..15).map(|t| ((t * (k + 3)) % 7) as f64 + if t == 9 { 10.0 } else { 0.0 }).collect();
                ScoreList::new(format!("l{k}"), s, 0).unwrap()
            })
            .collect();
        for m in ConsensusMethod::ALL {
            let out = run_consensus(m, &lists, &ConsensusOptions::default()).unwrap();
            out.ranks.validate().unwrap();
            assert_eq!(out.ranks.len(), 15);
            assert_eq!(out.ranks.order[0], 9, "{m}");
        }
    }
}
