use serde::{Deserialize, Serialize};

use crate::detectors::count_models::{select_model, CountModel};
use crate::detectors::{require_nodes, warmup_error, Attribution, ScoreList};
use crate::error::{Error, Result};
use crate::ingestion::FeatureMatrix;

/// Per-node model choices and tail p-values behind a PTSAD score list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtsadFit {
    /// Selected model per node; `None` for all-zero series, which are skipped.
    pub models: Vec<Option<CountModel>>,
    /// `p_values[i][t]`; skipped nodes hold 1.0 everywhere.
    pub p_values: Vec<Vec<f64>>,
    pub skipped: usize,
}

fn to_counts(f: &FeatureMatrix, round: bool) -> Result<Vec<Vec<u64>>> {
    if !round && !f.is_integer_valued() {
        return Err(Error::validation(format!(
            "PTSAD needs integer counts but feature `{}` is not integer-valued; enable rounding",
            f.feature
        )));
    }
    Ok(f.rows().map(|row| row.iter().map(|v| v.round() as u64).collect()).collect())
}

pub fn ptsad_detailed(f: &FeatureMatrix, round: bool) -> Result<(ScoreList, PtsadFit)> {
    require_nodes(f)?;
    let counts = to_counts(f, round)?;
    let t_len = f.num_ticks();
    let mut models = Vec::with_capacity(counts.len());
    let mut p_values = Vec::with_capacity(counts.len());
    for xs in &counts {
        if xs.iter().all(|&x| x == 0) {
            models.push(None);
            p_values.push(vec![1.0; t_len]);
        } else {
            let m = select_model(xs);
            p_values.push(m.p_values(xs));
            models.push(Some(m));
        }
    }
    let skipped = models.iter().filter(|m| m.is_none()).count();
    if skipped > 0 {
        log::warn!("PTSAD({}): skipped {skipped} all-zero series", f.feature.short());
    }
    let active = counts.len() - skipped;
    let scores = if active == 0 {
        vec![0.0; t_len]
    } else {
        (0..t_len)
            .map(|t| {
                let sum: f64 = models
                    .iter()
                    .zip(&p_values)
                    .filter(|(m, _)| m.is_some())
                    .map(|(_, p)| p[t])
                    .sum();
                (1.0 - sum / active as f64).clamp(0.0, 1.0)
            })
            .collect()
    };
    let list = ScoreList::new("PTSAD", scores, 0)?;
    Ok((
        list,
        PtsadFit {
            models,
            p_values,
            skipped,
        },
    ))
}

/// Probabilistic count-series detector: one minus the mean tail p-value of
/// the non-skipped nodes at each tick.
pub fn ptsad(f: &FeatureMatrix, round: bool) -> Result<ScoreList> {
    ptsad_detailed(f, round).map(|(s, _)| s)
}

/// Nodes by ascending p-value; responsibility is `1 - p`.
pub fn ptsad_attribution(f: &FeatureMatrix, round: bool, tick: usize) -> Result<Attribution> {
    if tick >= f.num_ticks() {
        return Err(warmup_error("PTSAD", tick, 0));
    }
    let (_, fit) = ptsad_detailed(f, round)?;
    let resp: Vec<f64> = fit.p_values.iter().map(|p| 1.0 - p[tick]).collect();
    Ok(Attribution::from_values(tick, &f.node_ids, &resp))
}
