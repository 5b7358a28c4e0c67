mod common;

use std::collections::HashMap;

use common::*;
use perc::baselines::{dense_batch, dense_next, rho_ratio, tc_batch, tc_next, uninferable_pairs, Inference, RhoInputs};
use perc::graph::{Clustering, Pair};
use perc::VoteTally;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn rho_symmetric(sg in small_graph(2, 7, 4)) {
        let g = sg.graph();
        let c = sg.clustering();
        prop_assume!(c.len() >= 2);
        let ab = rho_ratio(&g, c.block(0), c.block(1));
        let ba = rho_ratio(&g, c.block(1), c.block(0));
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
    }

    #[test]
    fn weaker_negative_edge_never_lowers_its_factor(yes in 0u32..4, other in proptest::collection::vec(0u32..=9, 0..4)) {
        // Block A = {0}, B = {1, 2, ...}; edge 0-1 moves from `yes` to
        // `yes + 1` out of 9, still below one half.
        let n = 2 + other.len();
        let votes: Vec<(usize, usize, u32, u32)> = other.iter().enumerate().map(|(i, &y)| (0, i + 2, y, 9)).collect();
        let b: Vec<usize> = (1..n).collect();
        let factor = |y: u32| {
            let mut v = votes.clone();
            v.push((0, 1, y, 9));
            let inputs = RhoInputs::collect(&indexed_graph(n, &v), &[0], &b);
            inputs.n.iter().map(|p| (1.0 - p) / p).product::<f64>()
        };
        prop_assert!(factor(yes + 1) >= factor(yes) - 1e-12);
    }

    #[test]
    fn tc_never_returns_known_or_inferable(sg in small_graph(2, 8, 4), seed in any::<u64>()) {
        let g = sg.graph();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inference = Inference::new(&g);
        for pair in tc_batch(&g, &mut rng, 100, &None) {
            prop_assert!(!g.contains(pair));
            prop_assert_eq!(inference.infer(pair), None);
        }
    }

    #[test]
    fn tc_with_honest_answers_recovers_gold(labels in proptest::collection::vec(0usize..4, 2..10), seed in any::<u64>()) {
        let n = labels.len();
        let gold = Clustering::from_labels(&labels);
        let mut g = indexed_graph(n, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while let Some(pair) = tc_next(&g, &mut rng) {
            let yes = if gold.same_block(pair.lo(), pair.hi()) { 3 } else { 0 };
            g.insert(pair, VoteTally::new(yes, 3).unwrap()).unwrap();
        }
        let inference = Inference::new(&g);
        for a in 0..n {
            for b in a + 1..n {
                let pair = Pair::new(a, b).unwrap();
                let known = match g.probability(pair) {
                    Some(p) => p > 0.5,
                    None => inference.infer(pair).expect("every pair decided"),
                };
                prop_assert_eq!(known, gold.same_block(a, b));
            }
        }
    }

    #[test]
    fn dense_picks_absent_inter_block_pairs(sg in small_graph(2, 7, 4), k in 1usize..6) {
        let g = sg.graph();
        let c = sg.clustering();
        let batch = dense_batch(&g, &c, k, &None);
        prop_assert!(batch.len() <= k);
        let mut seen = std::collections::HashSet::new();
        for pair in &batch {
            prop_assert!(!g.contains(*pair));
            prop_assert!(!c.same_block(pair.lo(), pair.hi()));
            prop_assert!(seen.insert(*pair));
        }
        prop_assert_eq!(dense_next(&g, &c), batch.first().copied());
    }
}

#[test]
fn tc_is_uniform_over_open_pairs() {
    let g = indexed_graph(4, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts: HashMap<Pair, u32> = HashMap::new();
    let draws = 10_000;
    for _ in 0..draws {
        *counts.entry(tc_next(&g, &mut rng).unwrap()).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = f64::from(draws) / 6.0;
    let chi2: f64 = counts.values().map(|&c| (f64::from(c) - expected).powi(2) / expected).sum();
    // 95th percentile of chi-square with 5 degrees of freedom.
    assert!(chi2 < 11.07, "chi-square {chi2}");
}

#[test]
fn rho_appendix_running_example() {
    let g = running_example();
    let c = perc::cluster::scc_cluster(&g);
    for (a, b) in [(0, 1), (2, 3)] {
        let inputs = RhoInputs::collect(&g, c.block(a), c.block(b));
        assert!((inputs.min_factor() - 0.3 / 0.7).abs() < 1e-12);
    }
    // Both weak block pairs score 0.3/0.7; the tie goes to the smaller
    // representative, A-D.
    assert_eq!(dense_next(&g, &c), Some(pair(0, 3)));
    // Majority answers already decide every pair.
    assert!(uninferable_pairs(&g, &None).is_empty());
}
