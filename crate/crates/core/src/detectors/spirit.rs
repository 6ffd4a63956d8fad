//! Streaming hidden-variable tracking over the node series. The number of
//! tracked principal directions grows or shrinks to keep the captured energy
//! inside `[low, high]`; a tick's score is the change in that number plus the
//! increase of the relative reconstruction error.

use serde::{Deserialize, Serialize};

use crate::detectors::{require_nodes, warmup_error, Attribution, ScoreList};
use crate::error::{Error, Result};
use crate::ingestion::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiritParams {
    /// Forgetting factor in (0, 1].
    pub lambda: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for SpiritParams {
    fn default() -> Self {
        SpiritParams {
            lambda: 0.96,
            low: 0.95,
            high: 0.98,
        }
    }
}

impl SpiritParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config(format!("SPIRIT lambda must lie in (0, 1], got {}", self.lambda)));
        }
        if !(0.0 < self.low && self.low < self.high && self.high < 1.0) {
            return Err(Error::config(format!(
                "SPIRIT energy bounds must satisfy 0 < low < high < 1, got ({}, {})",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Per-tick state of a SPIRIT run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiritTrace {
    /// Number of hidden variables after processing each tick.
    pub hidden: Vec<usize>,
    /// `|x - x_hat|^2 / |x|^2` at each tick, with `x_hat` the projection onto
    /// the directions held before the tick (0 for an all-zero column).
    pub relative_error: Vec<f64>,
    /// Participation weights (one vector per hidden variable) after each tick;
    /// only recorded when requested.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub valid_from: usize,
}

fn warmup_len(n: usize) -> usize {
    5.max(n / 10)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Gram-Schmidt in place; directions that collapse are replaced by the first
/// standard basis vector not yet spanned.
fn orthonormalize(ws: &mut [Vec<f64>]) {
    let n = ws.first().map_or(0, Vec::len);
    for i in 0..ws.len() {
        let (done, rest) = ws.split_at_mut(i);
        let w = &mut rest[0];
        for prev in done.iter() {
            let c = dot(w, prev);
            w.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
        }
        let norm = norm_sq(w).sqrt();
        if norm > 1e-12 {
            w.iter_mut().for_each(|a| *a /= norm);
            continue;
        }
        for basis in 0..n {
            let mut e = vec![0.0; n];
            e[basis] = 1.0;
            for prev in done.iter() {
                let c = dot(&e, prev);
                e.iter_mut().zip(prev).for_each(|(a, b)| *a -= c * b);
            }
            let en = norm_sq(&e).sqrt();
            if en > 1e-6 {
                e.iter_mut().for_each(|a| *a /= en);
                *w = e;
                break;
            }
        }
    }
}

pub fn spirit_trace(f: &FeatureMatrix, params: SpiritParams, record_weights: bool) -> Result<SpiritTrace> {
    require_nodes(f)?;
    params.validate()?;
    let n = f.num_nodes();
    let t_len = f.num_ticks();
    let lambda = params.lambda;

    let mut ws: Vec<Vec<f64>> = Vec::new();
    let mut d: Vec<f64> = Vec::new(); // per-direction discounted projection energy
    let mut captured: Vec<f64> = Vec::new();
    let mut total = 0.0;

    let mut hidden = Vec::with_capacity(t_len);
    let mut relative_error = Vec::with_capacity(t_len);
    let mut weights = Vec::new();

    for t in 0..t_len {
        let x = f.column(t);
        let x_energy = norm_sq(&x);
        total = lambda * total + x_energy;

        if ws.is_empty() && x_energy > 0.0 {
            // Start from the first non-empty observation's direction.
            let norm = x_energy.sqrt();
            ws.push(x.iter().map(|v| v / norm).collect());
            d.push(0.0);
            captured.push(0.0);
        }

        // A-priori reconstruction error against the directions learned so far.
        let mut prior = x.clone();
        for w in &ws {
            let c = dot(w, &prior);
            prior.iter_mut().zip(w).for_each(|(r, wi)| *r -= c * wi);
        }
        let err = if x_energy > 0.0 { (norm_sq(&prior) / x_energy).min(1.0) } else { 0.0 };
        relative_error.push(err);

        let mut residual = x.clone();
        for i in 0..ws.len() {
            let y = dot(&ws[i], &residual);
            d[i] = lambda * d[i] + y * y;
            captured[i] = lambda * captured[i] + y * y;
            if d[i] > 0.0 {
                let gain = y / d[i];
                for (w, r) in ws[i].iter_mut().zip(&residual) {
                    *w += gain * (r - y * *w);
                }
            }
            let wn = norm_sq(&ws[i]).sqrt();
            if wn > 0.0 {
                ws[i].iter_mut().for_each(|w| *w /= wn);
            }
            let y_new = dot(&ws[i], &residual);
            residual.iter_mut().zip(&ws[i]).for_each(|(r, w)| *r -= y_new * w);
        }
        orthonormalize(&mut ws);

        let kept: f64 = captured.iter().sum();
        if !ws.is_empty() && total > 0.0 {
            if kept < params.low * total && ws.len() < n {
                let r_energy = norm_sq(&residual);
                // A zero residual is swapped for an unused basis direction below.
                let rn = r_energy.sqrt().max(f64::MIN_POSITIVE);
                ws.push(residual.iter().map(|r| r / rn).collect());
                orthonormalize(&mut ws);
                d.push(r_energy);
                captured.push(r_energy);
            } else if kept > params.high * total && ws.len() > 1 {
                // Drop the weakest direction unless that would undershoot `low`.
                let last = *captured.last().unwrap_or(&0.0);
                if kept - last >= params.low * total {
                    ws.pop();
                    d.pop();
                    captured.pop();
                }
            }
        }

        hidden.push(ws.len().max(1));
        if record_weights {
            weights.push(ws.clone());
        }
    }

    Ok(SpiritTrace {
        hidden,
        relative_error,
        weights,
        valid_from: warmup_len(n).min(t_len),
    })
}

/// SPIRIT change score: `|delta k(t)| + max(0, err(t) - err(t-1))`.
pub fn spirit(f: &FeatureMatrix, params: SpiritParams) -> Result<ScoreList> {
    let tr = spirit_trace(f, params, false)?;
    let scores = (0..f.num_ticks())
        .map(|t| {
            if t < tr.valid_from || t == 0 {
                return 0.0;
            }
            let dk = (tr.hidden[t] as f64 - tr.hidden[t - 1] as f64).abs();
            let jump = (tr.relative_error[t] - tr.relative_error[t - 1]).max(0.0);
            dk + jump
        })
        .collect();
    ScoreList::new("SPIRIT", scores, tr.valid_from)
}

/// Per node, the summed absolute change of its participation weights across
/// hidden variables between `tick - 1` and `tick`.
pub fn spirit_attribution(f: &FeatureMatrix, params: SpiritParams, tick: usize) -> Result<Attribution> {
    let tr = spirit_trace(f, params, true)?;
    if tick < tr.valid_from.max(1) || tick >= f.num_ticks() {
        return Err(warmup_error("SPIRIT", tick, tr.valid_from.max(1)));
    }
    let n = f.num_nodes();
    let (before, after) = (&tr.weights[tick - 1], &tr.weights[tick]);
    let mut change = vec![0.0; n];
    for h in 0..before.len().max(after.len()) {
        for (node, c) in change.iter_mut().enumerate() {
            let b = before.get(h).map_or(0.0, |w| w[node]);
            let a = after.get(h).map_or(0.0, |w| w[node]);
            *c += (a.abs() - b.abs()).abs();
        }
    }
    Ok(Attribution::from_values(tick, &f.node_ids, &change))
}
