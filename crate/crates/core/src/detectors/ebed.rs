use nalgebra::{DMatrix, SymmetricEigen};

use crate::detectors::{require_nodes, warmup_error, Attribution, ScoreList};
use crate::error::{Error, Result};
use crate::ingestion::FeatureMatrix;

/// Eigen-behaviors of every sliding window together with the normalized
/// running summary of the windows before it.
struct EbedTrace {
    window: usize,
    /// Principal left singular vector of each n x w window, indexed by window start.
    behaviors: Vec<Vec<f64>>,
}

impl EbedTrace {
    /// Tick a window's score is reported at: its last tick.
    fn tick_of(&self, start: usize) -> usize {
        start + self.window - 1
    }

    fn valid_from(&self) -> usize {
        self.window
    }

    /// Unit-length mean of the behaviors of windows `0..start`.
    fn summary(&self, start: usize) -> Vec<f64> {
        let n = self.behaviors[0].len();
        let mut r = vec![0.0; n];
        for u in &self.behaviors[..start] {
            for (ri, ui) in r.iter_mut().zip(u) {
                *ri += ui;
            }
        }
        normalize_or_uniform(&mut r);
        r
    }
}

fn normalize_or_uniform(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        let u = 1.0 / (v.len() as f64).sqrt();
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Principal left singular vector of the n x w slice starting at `start`,
/// taken from the top eigenvector of the small w x w Gram matrix.
fn principal_behavior(f: &FeatureMatrix, start: usize, w: usize) -> Vec<f64> {
    let n = f.num_nodes();
    let slice = DMatrix::from_fn(n, w, |i, j| f.get(i, start + j));
    let gram = slice.transpose() * &slice;
    let eig = SymmetricEigen::new(gram);
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut u: Vec<f64> = if eig.eigenvalues[top] > 0.0 {
        (&slice * eig.eigenvectors.column(top)).iter().copied().collect()
    } else {
        vec![0.0; n]
    };
    // Nonnegative input has a nonnegative principal vector; fix the sign and
    // clear rounding noise.
    u.iter_mut().for_each(|x| *x = x.abs());
    normalize_or_uniform(&mut u);
    u
}

fn trace(f: &FeatureMatrix, window: usize) -> Result<EbedTrace> {
    require_nodes(f)?;
    let t_len = f.num_ticks();
    if window < 2 || window > t_len {
        return Err(Error::config(format!(
            "EBED window must lie in [2, {t_len}], got {window}"
        )));
    }
    let behaviors = (0..=t_len - window)
        .map(|start| principal_behavior(f, start, window))
        .collect();
    Ok(EbedTrace { window, behaviors })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigen-behavior detector: `Z = 1 - u(t) . r(t)` where `u(t)` is the
/// principal left singular vector of the window ending at `t` and `r(t)` the
/// unit-normalized mean of all earlier windows' vectors.
pub fn ebed(f: &FeatureMatrix, window: usize) -> Result<ScoreList> {
    let tr = trace(f, window)?;
    let mut scores = vec![0.0; f.num_ticks()];
    for start in 1..tr.behaviors.len() {
        let z = 1.0 - dot(&tr.behaviors[start], &tr.summary(start));
        scores[tr.tick_of(start)] = if z < 1e-12 { 0.0 } else { z.min(1.0) };
    }
    ScoreList::new("EBED", scores, tr.valid_from().min(f.num_ticks()))
}

/// Relative change `|u_i - r_i| / u_i` per node; zero where `u_i` is zero.
pub fn ebed_attribution(f: &FeatureMatrix, window: usize, tick: usize) -> Result<Attribution> {
    let tr = trace(f, window)?;
    if tick < tr.valid_from() || tick >= f.num_ticks() {
        return Err(warmup_error("EBED", tick, tr.valid_from()));
    }
    let start = tick + 1 - window;
    let u = &tr.behaviors[start];
    let r = tr.summary(start);
    let change: Vec<f64> = u
        .iter()
        .zip(&r)
        .map(|(&ui, &ri)| if ui > 0.0 { (ui - ri).abs() / ui } else { 0.0 })
        .collect();
    Ok(Attribution::from_values(tick, &f.node_ids, &change))
}
