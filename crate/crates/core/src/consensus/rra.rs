use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{common_len, RankList};
use crate::error::Result;
use crate::selection::binomial_tail;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RraOutput {
    /// Per-tick significance; lower means more consistently ranked on top.
    pub rho: Vec<f64>,
    pub ranks: RankList,
}

/// Robust rank aggregation: for each tick, the smallest order-statistic
/// probability of its sorted normalized ranks, optionally Bonferroni
/// corrected by the number of lists.
pub fn rra(lists: &[RankList], bonferroni: bool) -> Result<RraOutput> {
    let t_len = common_len(lists.iter().map(RankList::len), "RRA")?;
    for l in lists {
        l.validate()?;
    }
    let m = lists.len();
    let ranks: Vec<Vec<usize>> = lists.iter().map(RankList::ranks).collect();
    let rho: Vec<f64> = (0..t_len)
        .into_par_iter()
        .map(|t| {
            let mut r: Vec<f64> = ranks.iter().map(|rk| rk[t] as f64 / t_len as f64).collect();
            r.sort_by(f64::total_cmp);
            let min_p = (1..=m)
                .map(|l| binomial_tail(r[l - 1], l, m))
                .fold(f64::INFINITY, f64::min);
            if bonferroni {
                (min_p * m as f64).min(1.0)
            } else {
                min_p
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..t_len).collect();
    order.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(a.cmp(&b)));
    Ok(RraOutput {
        rho,
        ranks: RankList {
            order,
            tie_groups: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rl(order: &[usize]) -> RankList {
        RankList::new(order.to_vec()).unwrap()
    }

    #[test]
    fn single_list_identity() {
        let l = rl(&[3, 1, 0, 4, 2]);
        let out = rra(&[l.clone()], true).unwrap();
        assert_eq!(out.ranks.order, l.order);
        // rho is the normalized rank itself.
        assert!((out.rho[3] - 0.2).abs() < 1e-15);
        assert!((out.rho[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn worked_example() {
        // Tick 0 sits at normalized ranks 0.1, 0.2 and 0.9 in three lists of ten.
        let a: Vec<usize> = (0..10).collect();
        let mut b: Vec<usize> = (1..10).collect();
        b.insert(1, 0);
        let mut c: Vec<usize> = (1..10).collect();
        c.insert(8, 0);
        let out = rra(&[rl(&a), rl(&b), rl(&c)], true).unwrap();
        assert!((out.rho[0] - 0.312).abs() < 1e-12, "{}", out.rho[0]);
        let raw = rra(&[rl(&a), rl(&b), rl(&c)], false).unwrap();
        assert!((raw.rho[0] - 0.104).abs() < 1e-12);
    }

    #[test]
    fn unanimous_top_wins() {
        let lists = [rl(&[2, 0, 1, 3]), rl(&[2, 1, 3, 0]), rl(&[2, 3, 0, 1])];
        let out = rra(&lists, true).unwrap();
        assert_eq!(out.ranks.order[0], 2);
        assert!(out.rho.iter().all(|&r| r > 0.0 && r <= 1.0));
    }
}
