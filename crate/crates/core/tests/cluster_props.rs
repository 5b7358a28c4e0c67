mod common;

use common::*;
use perc::cluster::{merge_probability, mlc_bruteforce, mlc_unchanged, scc_cluster};
use perc::graph::{clustering_log_likelihood, Clustering, Pair};
use perc::VoteTally;
use proptest::prelude::*;

proptest! {
    #[test]
    fn scc_output_is_a_stable_partition(sg in small_graph(1, 9, 5)) {
        let g = sg.graph();
        let c = scc_cluster(&g);
        let mut seen: Vec<usize> = c.blocks().concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..sg.n).collect::<Vec<_>>());
        prop_assert!(!c.is_empty() && c.len() <= sg.n);
        // No two remaining blocks are worth merging.
        for j in 0..c.len() {
            for k in j + 1..c.len() {
                if let Some(p) = merge_probability(&g, c.block(j), c.block(k)) {
                    prop_assert!(p <= 0.5, "blocks {} and {} merge with {}", j, k, p);
                }
            }
        }
    }

    #[test]
    fn merge_probability_symmetric_and_order_free(sg in small_graph(2, 7, 5)) {
        let g = sg.graph();
        let c = sg.clustering();
        prop_assume!(c.len() >= 2);
        let (a, b) = (c.block(0).to_vec(), c.block(1).to_vec());
        let forward = merge_probability(&g, &a, &b);
        let backward = merge_probability(&g, &b, &a);
        let (ra, rb): (Vec<usize>, Vec<usize>) = (a.iter().rev().copied().collect(), b.iter().rev().copied().collect());
        let reordered = merge_probability(&g, &ra, &rb);
        match (forward, backward, reordered) {
            (None, None, None) => {}
            (Some(x), Some(y), Some(z)) => {
                prop_assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn consistent_answer_keeps_the_most_likely_clustering(
        sg in small_graph(3, 7, 5),
        pick in any::<prop::sample::Index>(),
        strength in 3u32..=5,
    ) {
        let g = sg.graph();
        let absent: Vec<Pair> = (0..sg.n)
            .flat_map(|a| (a + 1..sg.n).map(move |b| Pair::new(a, b).unwrap()))
            .filter(|&p| !g.contains(p))
            .collect();
        prop_assume!(!absent.is_empty());
        let pair = *pick.get(&absent);
        let before = mlc_bruteforce(&g).unwrap();
        let yes = if before.same_block(pair.lo(), pair.hi()) { strength } else { 5 - strength };
        prop_assert!(mlc_unchanged(&before, pair, f64::from(yes) / 5.0));
        let mut g2 = g.clone();
        g2.insert(pair, VoteTally::new(yes, 5).unwrap()).unwrap();
        let after = mlc_bruteforce(&g2).unwrap();
        let kept = clustering_log_likelihood(&g2, &before).unwrap();
        let best = clustering_log_likelihood(&g2, &after).unwrap();
        prop_assert!(after == before || (kept - best).abs() <= 1e-9 * best.abs().max(1.0));
    }

    #[test]
    fn bruteforce_is_optimal(sg in small_graph(1, 6, 4)) {
        let g = sg.graph();
        let best = mlc_bruteforce(&g).unwrap();
        let best_ll = clustering_log_likelihood(&g, &best).unwrap();
        let other_ll = clustering_log_likelihood(&g, &sg.clustering()).unwrap();
        prop_assert!(best_ll >= other_ll - 1e-12);
    }
}

fn abc(votes: &[(&str, &str, u32, u32)]) -> perc::UncertainGraph {
    graph(&["A", "B", "C"], votes)
}

#[test]
fn corrected_by_a_no_answer() {
    let before = abc(&[("A", "B", 8, 10), ("B", "C", 6, 10)]);
    assert_eq!(mlc_bruteforce(&before).unwrap(), Clustering::new(3, vec![vec![0, 1, 2]]).unwrap());
    let after = abc(&[("A", "B", 8, 10), ("B", "C", 6, 10), ("A", "C", 1, 10)]);
    assert_eq!(mlc_bruteforce(&after).unwrap(), Clustering::new(3, vec![vec![0, 1], vec![2]]).unwrap());
    assert!(!mlc_unchanged(&scc_cluster(&before), Pair::new(0, 2).unwrap(), 0.1));
}

#[test]
fn corrected_by_a_yes_answer() {
    let before = abc(&[("B", "C", 6, 10), ("A", "C", 3, 10)]);
    assert_eq!(mlc_bruteforce(&before).unwrap(), Clustering::new(3, vec![vec![0], vec![1, 2]]).unwrap());
    let after = abc(&[("B", "C", 6, 10), ("A", "C", 3, 10), ("A", "B", 9, 10)]);
    assert_eq!(mlc_bruteforce(&after).unwrap(), Clustering::new(3, vec![vec![0, 1], vec![2]]).unwrap());
}

