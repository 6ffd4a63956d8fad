use approx::assert_abs_diff_eq;
use graph_event_ensemble::calibration::ProbList;
use graph_event_ensemble::consensus::{
    inverse_rank, prob_aggregate, rra, run_consensus, Combiner, ConsensusMethod, ConsensusOptions, RankList,
};
use graph_event_ensemble::detectors::ScoreList;
use graph_event_ensemble::evaluation::{average_precision, EventTruth};
use graph_event_ensemble::selection::{binomial_tail, weighted_pearson};
use proptest::prelude::*;

fn is_permutation(order: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    order.len() == n && order.iter().all(|&t| t < n && !std::mem::replace(&mut seen[t], true))
}

fn rank_lists(t_len: usize, m: usize) -> impl Strategy<Value = Vec<RankList>> {
    prop::collection::vec(Just((0..t_len).collect::<Vec<usize>>()).prop_shuffle(), m)
        .prop_map(|orders| orders.into_iter().map(|o| RankList::new(o).unwrap()).collect())
}

/// Distinct scores in random order.
fn distinct_scores() -> impl Strategy<Value = Vec<f64>> {
    (12usize..30).prop_flat_map(|n| Just((0..n).map(|i| i as f64 * 0.5 + 1.0).collect::<Vec<f64>>()).prop_shuffle())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn inverse_rank_is_a_permutation(lists in (2usize..15, 1usize..6).prop_flat_map(|(t, m)| rank_lists(t, m))) {
        let (scores, ranks) = inverse_rank(&lists).unwrap();
        prop_assert!(is_permutation(&ranks.order, lists[0].len()));
        prop_assert!(scores.iter().all(|&s| s > 0.0 && s <= 1.0));
    }

    #[test]
    fn rra_significance_in_unit_interval(lists in (2usize..15, 1usize..6).prop_flat_map(|(t, m)| rank_lists(t, m))) {
        let out = rra(&lists, true).unwrap();
        prop_assert!(out.rho.iter().all(|&r| r > 0.0 && r <= 1.0));
        prop_assert!(out.ranks.order.windows(2).all(|w| out.rho[w[0]] <= out.rho[w[1]]));
        let raw = rra(&lists, false).unwrap();
        prop_assert!(raw.rho.iter().zip(&out.rho).all(|(a, b)| a <= b));
    }

    #[test]
    fn every_method_is_unanimous(scores in distinct_scores(), m in 1usize..4) {
        let lists: Vec<ScoreList> = (0..m).map(|i| ScoreList::new(format!("l{i}"), scores.clone(), 0).unwrap()).collect();
        let expect = RankList::from_scores(&scores).order;
        for method in ConsensusMethod::ALL {
            let res = run_consensus(method, &lists, &ConsensusOptions::default()).unwrap();
            prop_assert_eq!(&res.ranks.order, &expect, "{}", method);
        }
    }

    #[test]
    fn max_dominates_average(probs in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 8), 1..5)) {
        let lists: Vec<ProbList> = probs
            .into_iter()
            .enumerate()
            .map(|(i, p)| ProbList { source_id: format!("p{i}"), probs: p, labels: None })
            .collect();
        let (avg, _) = prob_aggregate(&lists, Combiner::Avg).unwrap();
        let (max, _) = prob_aggregate(&lists, Combiner::Max).unwrap();
        prop_assert!(avg.iter().zip(&max).all(|(a, b)| a <= b));
    }

    #[test]
    fn binomial_tail_is_monotone(l in 1usize..8, extra in 0usize..40, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let m = l + extra;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p_lo, p_hi) = (binomial_tail(lo, l, m), binomial_tail(hi, l, m));
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
        prop_assert!(p_lo <= p_hi + 1e-14);
    }

    #[test]
    fn weighted_pearson_symmetric_and_bounded(
        xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..1.0), 3..40)
    ) {
        let x: Vec<f64> = xy.iter().map(|v| v.0).collect();
        let y: Vec<f64> = xy.iter().map(|v| v.1).collect();
        let w: Vec<f64> = xy.iter().map(|v| v.2).collect();
        if let (Ok(r), Ok(s)) = (weighted_pearson(&x, &y, &w), weighted_pearson(&y, &x, &w)) {
            assert_abs_diff_eq!(r, s, epsilon = 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
        let r_self = weighted_pearson(&x, &x, &w).unwrap();
        assert_abs_diff_eq!(r_self, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ap_bounds_and_perfect_ranking(order in Just((0..20usize).collect::<Vec<_>>()).prop_shuffle(), k in 1usize..6) {
        let ranks = RankList::new(order.clone()).unwrap();
        let truth = EventTruth::new(order[..k].iter().copied()).unwrap();
        prop_assert_eq!(average_precision(&ranks, &truth, 0).unwrap(), 1.0);
        let tail = EventTruth::new(order[20 - k..].iter().copied()).unwrap();
        let ap = average_precision(&ranks, &tail, 0).unwrap();
        prop_assert!(ap > 0.0 && ap < 1.0);
    }
}
