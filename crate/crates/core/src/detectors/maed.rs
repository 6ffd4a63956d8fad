use crate::detectors::{require_nodes, warmup_error, Attribution, ScoreList};
use crate::error::Result;
use crate::ingestion::FeatureMatrix;

const VALID_FROM: usize = 2;

/// Per-node excess over the expanding-window `mean + 3 * std` band, one row per node.
fn node_excess(f: &FeatureMatrix) -> Vec<Vec<f64>> {
    f.rows()
        .map(|row| {
            let mut out = vec![0.0; row.len()];
            // Welford running moments over ticks [0, t).
            let (mut mean, mut m2) = (0.0, 0.0);
            for (t, &x) in row.iter().enumerate() {
                if t >= VALID_FROM {
                    let sd = (m2 / t as f64).sqrt();
                    out[t] = (x - (mean + 3.0 * sd)).max(0.0);
                }
                let delta = x - mean;
                mean += delta / (t + 1) as f64;
                m2 += delta * (x - mean);
            }
            out
        })
        .collect()
}

/// Moving-average detector: sums, over nodes, how far each value exceeds
/// three expanding-window standard deviations above the running mean.
pub fn maed(f: &FeatureMatrix) -> Result<ScoreList> {
    require_nodes(f)?;
    let excess = node_excess(f);
    let scores = (0..f.num_ticks())
        .map(|t| excess.iter().map(|row| row[t]).sum())
        .collect();
    ScoreList::new("MAED", scores, VALID_FROM.min(f.num_ticks()))
}

pub fn maed_attribution(f: &FeatureMatrix, tick: usize) -> Result<Attribution> {
    require_nodes(f)?;
    if tick < VALID_FROM || tick >= f.num_ticks() {
        return Err(warmup_error("MAED", tick, VALID_FROM));
    }
    let excess: Vec<f64> = node_excess(f).iter().map(|row| row[tick]).collect();
    Ok(Attribution::from_values(tick, &f.node_ids, &excess))
}
