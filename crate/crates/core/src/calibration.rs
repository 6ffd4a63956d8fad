//! Score calibration: turns heterogeneous raw score lists into comparable
//! outlier probabilities.

use serde::{Deserialize, Serialize};
use libm::erf;

use crate::detectors::ScoreList;
use crate::error::{Error, Result};

const EM_MAX_ITER: usize = 500;
const EM_TOL: f64 = 1e-8;
const MIN_FIT_TICKS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbList {
    pub source_id: String,
    pub probs: Vec<f64>,
    /// Outlier flags (mixture modeling only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64], m: f64) -> f64 {
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Unification: regularize against the sample mean, then map through the
/// Gaussian error function. Warm-up ticks get probability 0.
pub fn unify(s: &ScoreList) -> ProbList {
    let mut probs = vec![0.0; s.len()];
    let valid = s.valid_scores();
    if !valid.is_empty() {
        let baseline = mean(valid);
        let reg: Vec<f64> = valid.iter().map(|v| (v - baseline).max(0.0)).collect();
        let mu = mean(&reg);
        let sigma = pop_std(&reg, mu);
        let scale = reg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sigma > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            for (p, r) in probs[s.valid_from..].iter_mut().zip(&reg) {
                *p = erf((r - mu) / (sigma * std::f64::consts::SQRT_2)).max(0.0);
            }
        }
    }
    ProbList {
        source_id: s.id.clone(),
        probs,
        labels: None,
    }
}

/// Parameters of the inlier-exponential / outlier-Gaussian mixture, fitted
/// on scores shifted so their minimum is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub outlier_weight: f64,
    pub rate: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub probs: ProbList,
    /// `None` when the input was constant and nothing was fitted.
    pub params: Option<MixtureParams>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

impl MixtureParams {
    /// Log densities of (inlier, outlier) components including mixing weights.
    fn log_parts(&self, x: f64) -> (f64, f64) {
        let inlier = (1.0 - self.outlier_weight).ln() + self.rate.ln() - self.rate * x;
        let z = (x - self.mean) / self.std;
        let outlier = self.outlier_weight.ln()
            - self.std.ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * z * z;
        (inlier, outlier)
    }

    fn posterior(&self, x: f64) -> f64 {
        let (a, b) = self.log_parts(x);
        (b - log_sum_exp(a, b)).exp()
    }

    fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter()
            .map(|&x| {
                let (a, b) = self.log_parts(x);
                log_sum_exp(a, b)
            })
            .sum()
    }
}

/// Deterministic start: exponential on the lower 90% of scores, Gaussian on
/// the top 10%, mixing weights 0.9 / 0.1.
fn initial_params(xs: &[f64], std_floor: f64, rate_cap: f64) -> MixtureParams {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let split = ((sorted.len() as f64) * 0.9).floor().clamp(1.0, (sorted.len() - 1) as f64) as usize;
    let (low, high) = sorted.split_at(split);
    let low_mean = mean(low);
    let high_mean = mean(high);
    MixtureParams {
        outlier_weight: 0.1,
        rate: if low_mean > 0.0 { (1.0 / low_mean).min(rate_cap) } else { rate_cap },
        mean: high_mean,
        std: pop_std(high, high_mean).max(std_floor),
    }
}

/// Fits the exponential + Gaussian mixture by EM and returns the outlier
/// posterior per tick. The posterior is made non-decreasing in the score by
/// a running maximum, since the Gaussian tail falls below the exponential one
/// for very large scores.
pub fn fit_mixture(s: &ScoreList) -> Result<MixtureFit> {
    let valid = s.valid_scores();
    if valid.len() < MIN_FIT_TICKS {
        return Err(Error::validation(format!(
            "mixture modeling of {} needs at least {MIN_FIT_TICKS} valid ticks, got {}",
            s.id,
            valid.len()
        )));
    }
    let lo = valid.iter().cloned().fold(f64::INFINITY, f64::min);
    let xs: Vec<f64> = valid.iter().map(|v| v - lo).collect();
    let range = xs.iter().cloned().fold(0.0, f64::max);

    let mut probs = vec![0.0; s.len()];
    if range <= 1e-12 * lo.abs().max(1.0) {
        return Ok(MixtureFit {
            probs: ProbList {
                source_id: s.id.clone(),
                probs,
                labels: Some(vec![false; s.len()]),
            },
            params: None,
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
        });
    }

    let std_floor = range * 1e-6;
    let rate_cap = 1e6 / range;
    let n = xs.len() as f64;
    let mut params = initial_params(&xs, std_floor, rate_cap);
    let mut best = (params, params.log_likelihood(&xs));
    let mut prev_ll = best.1;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=EM_MAX_ITER {
        iterations = it;
        let gamma: Vec<f64> = xs.iter().map(|&x| params.posterior(x)).collect();
        let g_sum: f64 = gamma.iter().sum();
        let e_sum = n - g_sum;
        let weight = (g_sum / n).clamp(1e-6, 1.0 - 1e-6);
        let e_x: f64 = xs.iter().zip(&gamma).map(|(x, g)| (1.0 - g) * x).sum();
        let rate = if e_x > 0.0 { (e_sum / e_x).min(rate_cap) } else { rate_cap };
        let (mean_g, std_g) = if g_sum > 1e-12 {
            let m = xs.iter().zip(&gamma).map(|(x, g)| g * x).sum::<f64>() / g_sum;
            let v = xs.iter().zip(&gamma).map(|(x, g)| g * (x - m).powi(2)).sum::<f64>() / g_sum;
            (m, v.sqrt().max(std_floor))
        } else {
            (params.mean, params.std)
        };
        params = MixtureParams {
            outlier_weight: weight,
            rate,
            mean: mean_g,
            std: std_g,
        };
        let ll = params.log_likelihood(&xs);
        if ll > best.1 {
            best = (params, ll);
        }
        if (ll - prev_ll).abs() < EM_TOL {
            converged = true;
            break;
        }
        prev_ll = ll;
    }
    if !converged {
        log::warn!("mixture fit of {} did not converge in {EM_MAX_ITER} iterations", s.id);
    }
    let (params, log_likelihood) = best;

    // Monotone envelope of the posterior in score order.
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut running = 0.0f64;
    let mut post = vec![0.0; xs.len()];
    for &i in &order {
        running = running.max(params.posterior(xs[i]));
        post[i] = running;
    }
    probs[s.valid_from..].copy_from_slice(&post);
    let labels = probs.iter().map(|&p| p > 0.5).collect();
    Ok(MixtureFit {
        probs: ProbList {
            source_id: s.id.clone(),
            probs,
            labels: Some(labels),
        },
        params: Some(params),
        log_likelihood,
        iterations,
        converged,
    })
}

/// Mixture modeling calibration; see [`fit_mixture`].
pub fn mixture_model(s: &ScoreList) -> Result<ProbList> {
    fit_mixture(s).map(|f| f.probs)
}
