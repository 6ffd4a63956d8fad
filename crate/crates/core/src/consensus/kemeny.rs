use serde::{Deserialize, Serialize};

use crate::consensus::{common_len, RankList};
use crate::error::{Error, Result};

/// Largest tick count the exact subset dynamic program accepts.
pub const EXACT_MAX_TICKS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KemenyMode {
    Exact,
    Heuristic,
}

/// Total number of pairwise disagreements between `order` and the voters.
pub fn kemeny_cost(order: &[usize], lists: &[RankList]) -> u64 {
    let mut pos = vec![0usize; order.len()];
    for (p, &t) in order.iter().enumerate() {
        pos[t] = p;
    }
    lists
        .iter()
        .map(|l| {
            // Inversions of `order` positions read in the voter's order.
            let mut seq: Vec<usize> = l.order.iter().map(|&t| pos[t]).collect();
            count_inversions(&mut seq)
        })
        .sum()
}

fn count_inversions(seq: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut seq[..mid]) + count_inversions(&mut seq[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            merged.push(seq[i]);
            i += 1;
        } else {
            merged.push(seq[j]);
            inv += (mid - i) as u64;
            j += 1;
        }
    }
    merged.extend_from_slice(&seq[i..mid]);
    merged.extend_from_slice(&seq[j..]);
    seq.copy_from_slice(&merged);
    inv
}

/// `prefer[a][b]`: number of voters ranking `a` above `b`.
fn preference_matrix(lists: &[RankList], t_len: usize) -> Vec<Vec<u32>> {
    let mut prefer = vec![vec![0u32; t_len]; t_len];
    for l in lists {
        for (i, &a) in l.order.iter().enumerate() {
            for &b in &l.order[i + 1..] {
                prefer[a][b] += 1;
            }
        }
    }
    prefer
}

/// Kemeny-Young rank aggregation.
///
/// `Exact` solves the optimum by dynamic programming over subsets of the
/// still-unplaced ticks (at most [`EXACT_MAX_TICKS`]) and returns the
/// lexicographically smallest optimal order. `Heuristic` starts from the Borda
/// order and applies adjacent swaps while they lower the cost.
pub fn kemeny_young(lists: &[RankList], mode: KemenyMode) -> Result<RankList> {
    let t_len = common_len(lists.iter().map(RankList::len), "Kemeny-Young")?;
    for l in lists {
        l.validate()?;
    }
    match mode {
        KemenyMode::Exact => exact(lists, t_len),
        KemenyMode::Heuristic => Ok(heuristic(lists, t_len)),
    }
}

fn exact(lists: &[RankList], t_len: usize) -> Result<RankList> {
    if t_len > EXACT_MAX_TICKS {
        return Err(Error::Capacity(format!(
            "exact Kemeny-Young supports at most {EXACT_MAX_TICKS} ticks, got {t_len}; use heuristic mode"
        )));
    }
    let prefer = preference_matrix(lists, t_len);
    // Cost of putting `x` first among the set `rest`: voters who prefer some
    // other member of `rest` over `x`.
    let first_cost = |x: usize, rest: usize| -> u64 {
        (0..t_len)
            .filter(|&y| y != x && rest & (1 << y) != 0)
            .map(|y| prefer[y][x] as u64)
            .sum()
    };
    let full = (1usize << t_len) - 1;
    // best[s]: minimal cost to order the ticks in bitset `s`.
    let mut best = vec![u64::MAX; full + 1];
    best[0] = 0;
    for s in 1..=full {
        let mut b = u64::MAX;
        for x in 0..t_len {
            if s & (1 << x) != 0 {
                let c = first_cost(x, s) + best[s & !(1 << x)];
                b = b.min(c);
            }
        }
        best[s] = b;
    }
    let mut order = Vec::with_capacity(t_len);
    let mut rest = full;
    while rest != 0 {
        let x = (0..t_len)
            .find(|&x| rest & (1 << x) != 0 && first_cost(x, rest) + best[rest & !(1 << x)] == best[rest])
            .expect("an optimal first element exists");
        order.push(x);
        rest &= !(1 << x);
    }
    RankList::new(order)
}

fn heuristic(lists: &[RankList], t_len: usize) -> RankList {
    let ranks: Vec<Vec<usize>> = lists.iter().map(RankList::ranks).collect();
    let borda: Vec<usize> = (0..t_len)
        .map(|t| ranks.iter().map(|r| t_len - r[t]).sum())
        .collect();
    let mut order: Vec<usize> = (0..t_len).collect();
    order.sort_by(|&a, &b| borda[b].cmp(&borda[a]).then(a.cmp(&b)));

    let prefers = |a: usize, b: usize| ranks.iter().filter(|r| r[a] < r[b]).count();
    // Local Kemenization: swap adjacent pairs a majority orders the other way.
    loop {
        let mut changed = false;
        for i in 0..t_len.saturating_sub(1) {
            let (a, b) = (order[i], order[i + 1]);
            if prefers(b, a) > prefers(a, b) {
                order.swap(i, i + 1);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    RankList {
        order,
        tie_groups: None,
    }
}
