//! Count models for per-node series: Poisson, zero-inflated Poisson and two
//! hurdle models (Bernoulli or first-order Markov zero process, each with a
//! zero-truncated Poisson count process), plus Vuong model selection.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Two-sided 5% critical value of the standard normal.
const VUONG_CRITICAL: f64 = 1.959_963_984_540_054;
const ZIP_MAX_ITER: usize = 200;
const ZIP_TOL: f64 = 1e-8;
/// Smallest rate used when a zero-truncated sample is all ones.
const MIN_RATE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum CountModel {
    Poisson { lambda: f64 },
    Zip { pi: f64, lambda: f64 },
    BernoulliZtp { q: f64, lambda: f64 },
    /// `p01`/`p11`: probability of a nonzero value after a zero/nonzero one;
    /// `q0` is the probability the first value is nonzero.
    MarkovZtp { q0: f64, p01: f64, p11: f64, lambda: f64 },
}

fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

fn poisson_ln_pmf(k: u64, lambda: f64) -> f64 {
    k as f64 * lambda.ln() - lambda - ln_factorial(k)
}

/// `P(X >= k)` for `X ~ Poisson(lambda)`.
pub fn poisson_sf_inclusive(k: u64, lambda: f64) -> f64 {
    if k == 0 {
        1.0
    } else {
        gamma_lr(k as f64, lambda)
    }
}

/// `ln(1 - e^{-lambda})`, accurate for small rates.
fn ln_one_minus_exp_neg(lambda: f64) -> f64 {
    (-(-lambda).exp_m1()).ln()
}

fn ztp_ln_pmf(k: u64, lambda: f64) -> f64 {
    poisson_ln_pmf(k, lambda) - ln_one_minus_exp_neg(lambda)
}

/// `P(X >= k)` for a zero-truncated Poisson, `k >= 1`.
fn ztp_sf_inclusive(k: u64, lambda: f64) -> f64 {
    if k <= 1 {
        1.0
    } else {
        (poisson_sf_inclusive(k, lambda) / -(-lambda).exp_m1()).min(1.0)
    }
}

fn ln_prob(p: f64) -> f64 {
    p.max(1e-300).ln()
}

/// Rate of a zero-truncated Poisson whose mean is `mean_positive` (>= 1).
pub fn ztp_rate(mean_positive: f64) -> f64 {
    if mean_positive <= 1.0 + 1e-12 {
        return MIN_RATE;
    }
    // g(l) = l / (1 - e^{-l}) is increasing and convex; Newton from the mean
    // converges from above.
    let mut lambda = mean_positive;
    for _ in 0..100 {
        let one_m = -(-lambda).exp_m1();
        let g = lambda / one_m - mean_positive;
        let dg = (one_m - lambda * (-lambda).exp()) / (one_m * one_m);
        let step = g / dg;
        let next = (lambda - step).max(lambda / 2.0).max(MIN_RATE);
        if (next - lambda).abs() <= 1e-14 * lambda.max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

fn mean_of_positive(xs: &[u64]) -> (usize, f64) {
    let pos: Vec<u64> = xs.iter().copied().filter(|&x| x > 0).collect();
    let mean = pos.iter().sum::<u64>() as f64 / pos.len().max(1) as f64;
    (pos.len(), mean)
}

impl CountModel {
    pub fn name(&self) -> &'static str {
        match self {
            CountModel::Poisson { .. } => "poisson",
            CountModel::Zip { .. } => "zip",
            CountModel::BernoulliZtp { .. } => "bernoulli-ztp",
            CountModel::MarkovZtp { .. } => "markov-ztp",
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            CountModel::Poisson { .. } => 1,
            CountModel::Zip { .. } | CountModel::BernoulliZtp { .. } => 2,
            CountModel::MarkovZtp { .. } => 3,
        }
    }

    /// Requires at least one nonzero observation.
    pub fn fit_poisson(xs: &[u64]) -> Self {
        let lambda = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
        CountModel::Poisson { lambda }
    }

    /// EM fit of the zero-inflated Poisson.
    pub fn fit_zip(xs: &[u64]) -> Self {
        let n = xs.len() as f64;
        let zeros = xs.iter().filter(|&&x| x == 0).count() as f64;
        let total = xs.iter().sum::<u64>() as f64;
        if zeros == 0.0 {
            return CountModel::Zip {
                pi: 0.0,
                lambda: total / n,
            };
        }
        let (_, mut lambda) = mean_of_positive(xs);
        let mut pi = 0.5 * zeros / n;
        let mut prev_ll = f64::NEG_INFINITY;
        for _ in 0..ZIP_MAX_ITER {
            // E-step: posterior that an observed zero is structural.
            let z = pi / (pi + (1.0 - pi) * (-lambda).exp());
            // M-step.
            pi = zeros * z / n;
            lambda = total / (n - zeros * z);
            let ll = CountModel::Zip { pi, lambda }.log_likelihood(xs);
            if (ll - prev_ll).abs() < ZIP_TOL {
                break;
            }
            prev_ll = ll;
        }
        CountModel::Zip { pi, lambda }
    }

    pub fn fit_bernoulli_ztp(xs: &[u64]) -> Self {
        let (pos, mean) = mean_of_positive(xs);
        CountModel::BernoulliZtp {
            q: pos as f64 / xs.len() as f64,
            lambda: ztp_rate(mean),
        }
    }

    pub fn fit_markov_ztp(xs: &[u64]) -> Self {
        let (pos, mean) = mean_of_positive(xs);
        let q = pos as f64 / xs.len() as f64;
        let mut counts = [[0usize; 2]; 2];
        for w in xs.windows(2) {
            counts[(w[0] > 0) as usize][(w[1] > 0) as usize] += 1;
        }
        let trans = |from: usize| {
            let total = counts[from][0] + counts[from][1];
            if total == 0 {
                q
            } else {
                counts[from][1] as f64 / total as f64
            }
        };
        CountModel::MarkovZtp {
            q0: q,
            p01: trans(0),
            p11: trans(1),
            lambda: ztp_rate(mean),
        }
    }

    /// Probability the value at position `i` is nonzero under a hurdle model.
    fn hurdle_prob(&self, xs: &[u64], i: usize) -> f64 {
        match *self {
            CountModel::BernoulliZtp { q, .. } => q,
            CountModel::MarkovZtp { q0, p01, p11, .. } => {
                if i == 0 {
                    q0
                } else if xs[i - 1] > 0 {
                    p11
                } else {
                    p01
                }
            }
            _ => unreachable!("not a hurdle model"),
        }
    }

    /// Log-likelihood of each observation (conditional on the previous one for
    /// the Markov model).
    pub fn pointwise_log_likelihood(&self, xs: &[u64]) -> Vec<f64> {
        (0..xs.len())
            .map(|i| {
                let x = xs[i];
                match *self {
                    CountModel::Poisson { lambda } => poisson_ln_pmf(x, lambda),
                    CountModel::Zip { pi, lambda } => {
                        if x == 0 {
                            ln_prob(pi + (1.0 - pi) * (-lambda).exp())
                        } else {
                            ln_prob(1.0 - pi) + poisson_ln_pmf(x, lambda)
                        }
                    }
                    CountModel::BernoulliZtp { lambda, .. } | CountModel::MarkovZtp { lambda, .. } => {
                        let q = self.hurdle_prob(xs, i);
                        if x == 0 {
                            ln_prob(1.0 - q)
                        } else {
                            ln_prob(q) + ztp_ln_pmf(x, lambda)
                        }
                    }
                }
            })
            .collect()
    }

    pub fn log_likelihood(&self, xs: &[u64]) -> f64 {
        self.pointwise_log_likelihood(xs).iter().sum()
    }

    /// Single-sided p-value `P(X >= x) = 1 - cdf(x) + pmf(x)` of every observation.
    pub fn p_values(&self, xs: &[u64]) -> Vec<f64> {
        (0..xs.len())
            .map(|i| {
                let x = xs[i];
                if x == 0 {
                    return 1.0;
                }
                match *self {
                    CountModel::Poisson { lambda } => poisson_sf_inclusive(x, lambda),
                    CountModel::Zip { pi, lambda } => (1.0 - pi) * poisson_sf_inclusive(x, lambda),
                    CountModel::BernoulliZtp { lambda, .. } | CountModel::MarkovZtp { lambda, .. } => {
                        self.hurdle_prob(xs, i) * ztp_sf_inclusive(x, lambda)
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VuongOutcome {
    First,
    Second,
    Indistinguishable,
}

/// Vuong's likelihood-ratio test at the 5% level on pointwise log-likelihoods.
pub fn vuong_test(first: &[f64], second: &[f64]) -> VuongOutcome {
    let n = first.len() as f64;
    let diffs: Vec<f64> = first.iter().zip(second).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1.0);
    if sd <= 1e-12 * scale {
        return if mean.abs() <= 1e-12 * scale {
            VuongOutcome::Indistinguishable
        } else if mean > 0.0 {
            VuongOutcome::First
        } else {
            VuongOutcome::Second
        };
    }
    let stat = n.sqrt() * mean / sd;
    if stat > VUONG_CRITICAL {
        VuongOutcome::First
    } else if stat < -VUONG_CRITICAL {
        VuongOutcome::Second
    } else {
        VuongOutcome::Indistinguishable
    }
}

/// Fits all four models and runs the tournament Poisson vs ZIP, winner vs
/// Bernoulli+ZTP, winner vs Markov+ZTP. Indistinguishable pairs keep the model
/// with fewer parameters, or the incumbent when the counts are equal.
/// `xs` must contain at least one nonzero value.
pub fn select_model(xs: &[u64]) -> CountModel {
    let mut best = CountModel::fit_poisson(xs);
    let mut best_ll = best.pointwise_log_likelihood(xs);
    let challengers = [
        CountModel::fit_zip(xs),
        CountModel::fit_bernoulli_ztp(xs),
        CountModel::fit_markov_ztp(xs),
    ];
    for challenger in challengers {
        let ll = challenger.pointwise_log_likelihood(xs);
        let take = match vuong_test(&ll, &best_ll) {
            VuongOutcome::First => true,
            VuongOutcome::Second => false,
            VuongOutcome::Indistinguishable => challenger.num_params() < best.num_params(),
        };
        if take {
            best = challenger;
            best_ll = ll;
        }
    }
    best
}
