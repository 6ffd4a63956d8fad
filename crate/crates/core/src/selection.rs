//! Ensemble component selection: vertical, horizontal, diversity-based,
//! full and random.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::calibration::{fit_mixture, unify};
use crate::consensus::RankList;
use crate::detectors::ScoreList;
use crate::error::{Error, Result};

const KMEANS_MAX_ITER: usize = 100;
const DIRECT_BINOMIAL_MAX_M: usize = 30;

/// Weighted Pearson correlation with weighted means.
pub fn weighted_pearson(x: &[f64], y: &[f64], w: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != w.len() {
        return Err(Error::validation("weighted correlation: vectors differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::validation("weighted correlation needs at least two points"));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::validation("weights must be finite and non-negative"));
    }
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        return Err(Error::validation("weights sum to zero"));
    }
    // Exact constancy on the weighted support is undefined; catching it here
    // avoids correlating rounding noise.
    let constant = |v: &[f64]| {
        let mut support = v.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(a, _)| *a);
        let first = support.next();
        support.all(|a| Some(a) == first)
    };
    if constant(x) || constant(y) {
        return Err(Error::UndefinedCorrelation);
    }
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        cov += w[i] * dx * dy;
        vx += w[i] * dx * dx;
        vy += w[i] * dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}

/// Probability that the `l`-th smallest of `m` uniform draws is at most `r`:
/// `sum_{t=l}^{m} C(m,t) r^t (1-r)^(m-t)`.
pub fn binomial_tail(r: f64, l: usize, m: usize) -> f64 {
    debug_assert!(l >= 1 && l <= m);
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 {
        return 1.0;
    }
    let (lr, lq) = (r.ln(), (-r).ln_1p());
    let sum: f64 = if m <= DIRECT_BINOMIAL_MAX_M {
        let mut c = 1.0;
        let mut s = 0.0;
        for t in 0..=m {
            if t >= l {
                s += c * (t as f64 * lr + (m - t) as f64 * lq).exp();
            }
            c = c * (m - t) as f64 / (t + 1) as f64;
        }
        s
    } else {
        let ln_m = ln_gamma(m as f64 + 1.0);
        (l..=m)
            .map(|t| {
                let ln_c = ln_m - ln_gamma(t as f64 + 1.0) - ln_gamma((m - t) as f64 + 1.0);
                (ln_c + t as f64 * lr + (m - t) as f64 * lq).exp()
            })
            .sum()
    };
    sum.clamp(0.0, 1.0)
}

/// `p_{l,m}(r)` for a sorted vector of normalized ranks; `l` is 1-based.
pub fn binomial_order_prob(r_sorted: &[f64], l: usize) -> Result<f64> {
    let m = r_sorted.len();
    if l == 0 || l > m {
        return Err(Error::validation(format!("order index {l} outside 1..={m}")));
    }
    if r_sorted.iter().any(|r| !(0.0..=1.0).contains(r)) || r_sorted.windows(2).any(|p| p[0] > p[1]) {
        return Err(Error::validation("normalized ranks must be sorted values in [0, 1]"));
    }
    Ok(binomial_tail(r_sorted[l - 1], l, m))
}

/// Pseudo ground truth a selection was measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    None,
    /// Average unified probability per tick (vertical, diverse).
    Scores(Vec<f64>),
    /// Majority-voted anomaly ticks (horizontal).
    Anomalies(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub id: String,
    /// Correlation to the target (vertical, diverse) or discard count (horizontal).
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub strategy: String,
    /// Selected ids in selection order.
    pub selected: Vec<String>,
    /// Input positions of `selected`.
    pub indices: Vec<usize>,
    pub target: Target,
    pub diagnostics: Vec<Diagnostic>,
    /// True when the strategy degraded to selecting everything.
    #[serde(default)]
    pub fallback: bool,
}

impl SelectionResult {
    fn new(strategy: &str, lists: &[ScoreList], indices: Vec<usize>) -> Self {
        SelectionResult {
            strategy: strategy.to_string(),
            selected: indices.iter().map(|&i| lists[i].id.clone()).collect(),
            indices,
            target: Target::None,
            diagnostics: Vec::new(),
            fallback: false,
        }
    }
}

fn require_nonempty(lists: &[ScoreList], what: &str) -> Result<usize> {
    if lists.is_empty() {
        return Err(Error::validation(format!("{what} selection needs at least one list")));
    }
    let t_len = lists[0].len();
    if lists.iter().any(|l| l.len() != t_len) {
        return Err(Error::validation(format!("{what} selection: lists cover different tick sets")));
    }
    Ok(t_len)
}

pub fn select_all(lists: &[ScoreList]) -> Result<SelectionResult> {
    require_nonempty(lists, "full")?;
    Ok(SelectionResult::new("full", lists, (0..lists.len()).collect()))
}

/// Uniform random `k`-subset, reported in input order.
pub fn select_random(lists: &[ScoreList], k: usize, seed: u64) -> Result<SelectionResult> {
    require_nonempty(lists, "random")?;
    if k == 0 || k > lists.len() {
        return Err(Error::validation(format!(
            "random selection size {k} outside 1..={}",
            lists.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, lists.len(), k).into_vec();
    picked.sort_unstable();
    Ok(SelectionResult::new("random", lists, picked))
}

fn average(vectors: &[&[f64]]) -> Vec<f64> {
    let n = vectors.len() as f64;
    (0..vectors[0].len())
        .map(|t| vectors.iter().map(|v| v[t]).sum::<f64>() / n)
        .collect()
}

/// Correlation with undefined values mapped to `None`.
fn corr(x: &[f64], y: &[f64], w: &[f64]) -> Result<Option<f64>> {
    match weighted_pearson(x, y, w) {
        Ok(c) => Ok(Some(c)),
        Err(Error::UndefinedCorrelation) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Sort key placing undefined correlations last in either direction.
fn order_key(c: Option<f64>, ascending: bool) -> (bool, f64) {
    match c {
        None => (true, 0.0),
        Some(v) if ascending => (false, v),
        Some(v) => (false, -v),
    }
}

fn by_key(a: (bool, f64), b: (bool, f64)) -> std::cmp::Ordering {
    a.0.cmp(&b.0).then(a.1.total_cmp(&b.1))
}

fn greedy_correlation(lists: &[ScoreList], ascending: bool, name: &str) -> Result<SelectionResult> {
    require_nonempty(lists, name)?;
    let probs: Vec<Vec<f64>> = lists.iter().map(|l| unify(l).probs).collect();
    let refs: Vec<&[f64]> = probs.iter().map(Vec::as_slice).collect();
    let target = average(&refs);
    let weights: Vec<f64> = RankList::from_scores(&target)
        .ranks()
        .into_iter()
        .map(|r| 1.0 / r as f64)
        .collect();

    let to_target = probs
        .iter()
        .map(|p| corr(p, &target, &weights))
        .collect::<Result<Vec<_>>>()?;
    let diagnostics = lists
        .iter()
        .zip(&to_target)
        .map(|(l, c)| Diagnostic {
            id: l.id.clone(),
            value: *c,
        })
        .collect();

    let mut pool: Vec<usize> = (0..lists.len()).collect();
    pool.sort_by(|&a, &b| by_key(order_key(to_target[a], ascending), order_key(to_target[b], ascending)).then(a.cmp(&b)));
    if to_target[pool[0]].is_none() {
        log::warn!("{name} selection: no list correlates with the target; selecting all");
        let mut res = SelectionResult::new(name, lists, (0..lists.len()).collect());
        res.target = Target::Scores(target);
        res.diagnostics = diagnostics;
        res.fallback = true;
        return Ok(res);
    }

    let mut chosen = vec![pool.remove(0)];
    let mut prediction = probs[chosen[0]].clone();
    let mut current = to_target[chosen[0]];
    while !pool.is_empty() {
        let to_pred = pool
            .iter()
            .map(|&i| corr(&probs[i], &prediction, &weights))
            .collect::<Result<Vec<_>>>()?;
        let mut keyed: Vec<(usize, Option<f64>)> = pool.iter().copied().zip(to_pred).collect();
        keyed.sort_by(|a, b| by_key(order_key(a.1, ascending), order_key(b.1, ascending)).then(a.0.cmp(&b.0)));
        let cand = keyed[0].0;
        pool.retain(|&i| i != cand);

        let mut with: Vec<&[f64]> = chosen.iter().map(|&i| probs[i].as_slice()).collect();
        with.push(&probs[cand]);
        let trial = average(&with);
        let improved = match (corr(&trial, &target, &weights)?, current) {
            (Some(new), Some(old)) => new > old,
            (Some(_), None) => true,
            (None, _) => false,
        };
        if improved {
            chosen.push(cand);
            current = corr(&trial, &target, &weights)?;
            prediction = trial;
        }
    }
    let mut res = SelectionResult::new(name, lists, chosen);
    res.target = Target::Scores(target);
    res.diagnostics = diagnostics;
    Ok(res)
}

/// Greedy inclusion of the lists best correlated with the current ensemble,
/// kept only when they strictly raise its weighted correlation to the
/// averaged-unification target.
pub fn select_vertical(lists: &[ScoreList]) -> Result<SelectionResult> {
    greedy_correlation(lists, false, "vertical")
}

/// Vertical selection with both orderings ascending: seeds with and examines
/// the least correlated lists first.
pub fn select_diverse(lists: &[ScoreList]) -> Result<SelectionResult> {
    greedy_correlation(lists, true, "diverse")
}

/// 2-means over the non-zero counts with centroids started at `lo` and
/// `hi`; returns the membership flag "high" for each value.
fn two_means(values: &[f64], lo: f64, hi: f64) -> Vec<bool> {
    let mut c = [lo, hi];
    let mut high = vec![false; values.len()];
    for _ in 0..KMEANS_MAX_ITER {
        let next: Vec<bool> = values.iter().map(|&v| (v - c[1]).abs() < (v - c[0]).abs()).collect();
        let changed = next != high;
        high = next;
        for (k, flag) in [false, true].into_iter().enumerate() {
            let members: Vec<f64> = values.iter().zip(&high).filter(|(_, &h)| h == flag).map(|(v, _)| *v).collect();
            if !members.is_empty() {
                c[k] = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        if !changed {
            break;
        }
    }
    high
}

/// Discards lists that repeatedly rank the majority-voted anomalies lower
/// than the order statistics of the other lists make plausible.
pub fn select_horizontal(lists: &[ScoreList]) -> Result<SelectionResult> {
    let t_len = require_nonempty(lists, "horizontal")?;
    let m = lists.len();
    if m < 2 {
        return Err(Error::validation("horizontal selection needs at least two lists"));
    }
    let labels = lists
        .iter()
        .map(|l| {
            fit_mixture(l)
                .map(|f| f.probs.labels.unwrap_or_default())
                .map_err(|e| Error::component(l.id.clone(), e))
        })
        .collect::<Result<Vec<_>>>()?;
    let anomalies: Vec<usize> = (0..t_len)
        .filter(|&t| 2 * labels.iter().filter(|l| l[t]).count() > m)
        .collect();
    let mut res = SelectionResult::new("horizontal", lists, (0..m).collect());
    if anomalies.is_empty() {
        log::warn!("horizontal selection: no majority anomalies; selecting all");
        res.fallback = true;
        return Ok(res);
    }

    let ranks: Vec<Vec<usize>> = lists.iter().map(|l| RankList::from_scores(&l.scores).ranks()).collect();
    let mut counts = vec![0usize; m];
    for &o in &anomalies {
        let mut entries: Vec<(f64, usize)> = (0..m).map(|i| (ranks[i][o] as f64 / t_len as f64, i)).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let r: Vec<f64> = entries.iter().map(|e| e.0).collect();
        // Position of the minimum p; ties go to the later position.
        let mut best = (f64::INFINITY, 0);
        for l in 1..=m {
            let p = binomial_tail(r[l - 1], l, m);
            if p <= best.0 {
                best = (p, l);
            }
        }
        for &(_, i) in &entries[best.1..] {
            counts[i] += 1;
        }
    }

    res.target = Target::Anomalies(anomalies);
    res.diagnostics = lists
        .iter()
        .zip(&counts)
        .map(|(l, &c)| Diagnostic {
            id: l.id.clone(),
            value: Some(c as f64),
        })
        .collect();

    let lo = *counts.iter().min().expect("m >= 2") as f64;
    let hi = *counts.iter().max().expect("m >= 2") as f64;
    if hi == 0.0 || lo == hi {
        return Ok(res);
    }
    let nonzero: Vec<usize> = (0..m).filter(|&i| counts[i] > 0).collect();
    let values: Vec<f64> = nonzero.iter().map(|&i| counts[i] as f64).collect();
    let high = two_means(&values, lo, hi);
    let discard: Vec<usize> = nonzero.iter().zip(&high).filter(|(_, &h)| h).map(|(&i, _)| i).collect();
    if discard.len() < m {
        res.indices.retain(|i| !discard.contains(i));
        res.selected = res.indices.iter().map(|&i| lists[i].id.clone()).collect();
    }
    Ok(res)
}

/// Selection strategy applied in either pipeline phase. Serialized in its
/// string form, e.g. `"horizontal"` or `"random:3:7"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Strategy {
    Full,
    Vertical,
    Horizontal,
    Diverse,
    Random { k: usize, seed: u64 },
}

impl Strategy {
    pub fn select(&self, lists: &[ScoreList]) -> Result<SelectionResult> {
        match *self {
            Strategy::Full => select_all(lists),
            Strategy::Vertical => select_vertical(lists),
            Strategy::Horizontal => select_horizontal(lists),
            Strategy::Diverse => select_diverse(lists),
            Strategy::Random { k, seed } => select_random(lists, k.min(lists.len()), seed),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Full => "Full",
            Strategy::Vertical => "SelectV",
            Strategy::Horizontal => "SelectH",
            Strategy::Diverse => "DivE",
            Strategy::Random { .. } => "RandE",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Full => f.write_str("full"),
            Strategy::Vertical => f.write_str("vertical"),
            Strategy::Horizontal => f.write_str("horizontal"),
            Strategy::Diverse => f.write_str("diverse"),
            Strategy::Random { k, seed } => write!(f, "random:{k}:{seed}"),
        }
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Accepts `full`, `vertical`, `horizontal`, `diverse` and `random:K[:SEED]`.
impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let mut parts = lower.split(':');
        let bad = || Error::config(format!("unknown strategy `{s}`"));
        let out = match parts.next().ok_or_else(bad)? {
            "full" => Strategy::Full,
            "vertical" | "selectv" => Strategy::Vertical,
            "horizontal" | "selecth" => Strategy::Horizontal,
            "diverse" | "dive" => Strategy::Diverse,
            "random" | "rande" => {
                let k = parts.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
                let seed = match parts.next() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => 0,
                };
                Strategy::Random { k, seed }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(out)
    }
}
