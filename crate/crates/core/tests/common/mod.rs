//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use perc::graph::{Clustering, Pair};
use perc::{RecordId, UncertainGraph, VoteTally};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn id(s: &str) -> RecordId {
    RecordId::new(s).unwrap()
}

/// Zero-padded ids `r00`, `r01`, ... so that id order equals index order.
pub fn ids(n: usize) -> Vec<RecordId> {
    (0..n).map(|i| id(&format!("r{i:02}"))).collect()
}

pub fn graph(names: &[&str], votes: &[(&str, &str, u32, u32)]) -> UncertainGraph {
    UncertainGraph::ingest_votes(
        names.iter().map(|n| id(n)),
        votes
            .iter()
            .map(|&(a, b, y, t)| (id(a), id(b), VoteTally::new(y, t).unwrap())),
    )
    .unwrap()
}

/// Graph over `ids(n)` from index-based tallies.
pub fn indexed_graph(n: usize, votes: &[(usize, usize, u32, u32)]) -> UncertainGraph {
    let names = ids(n);
    UncertainGraph::ingest_votes(
        names.clone(),
        votes
            .iter()
            .map(|&(a, b, y, t)| (names[a].clone(), names[b].clone(), VoteTally::new(y, t).unwrap())),
    )
    .unwrap()
}

pub fn pair(a: usize, b: usize) -> Pair {
    Pair::new(a, b).unwrap()
}

/// Two-entity-per-side example: blocks {A,B}, {C,D}, {E,F}, {G,H} with
/// intra edges at 0.8, C1-C2 edges {0.3, 0.6}, C3-C4 edges {0.3, 0.7}, and
/// one certain NO between each other block pair.
pub fn running_example() -> UncertainGraph {
    graph(
        &["A", "B", "C", "D", "E", "F", "G", "H"],
        &[
            ("A", "B", 8, 10),
            ("C", "D", 8, 10),
            ("E", "F", 8, 10),
            ("G", "H", 8, 10),
            ("A", "C", 3, 10),
            ("B", "D", 6, 10),
            ("E", "G", 3, 10),
            ("F", "H", 7, 10),
            ("A", "E", 0, 10),
            ("C", "E", 0, 10),
            ("A", "G", 0, 10),
            ("C", "G", 0, 10),
        ],
    )
}

/// Four records: AB 0.9, BC 0.8, CD 0.2, AD 0.6.
pub fn four_records() -> UncertainGraph {
    graph(
        &["A", "B", "C", "D"],
        &[("A", "B", 9, 10), ("B", "C", 8, 10), ("C", "D", 2, 10), ("A", "D", 6, 10)],
    )
}

/// Probability that `n` nodes are connected when each edge `(u, v, p)`
/// exists independently with probability `p`, by enumerating every world.
pub fn brute_connectivity(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let mut total = 0.0;
    for mask in 0u64..(1 << edges.len()) {
        let mut weight = 1.0;
        let mut adjacency = vec![Vec::new(); n];
        for (i, &(u, v, p)) in edges.iter().enumerate() {
            if mask >> i & 1 == 1 {
                weight *= p;
                adjacency[u].push(v);
                adjacency[v].push(u);
            } else {
                weight *= 1.0 - p;
            }
        }
        if weight == 0.0 {
            continue;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            total += weight;
        }
    }
    total
}

/// Edges of `graph` inside `block`, relabelled to block positions.
pub fn block_edges(graph: &UncertainGraph, block: &[usize]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for (i, &a) in block.iter().enumerate() {
        for (j, &b) in block.iter().enumerate().skip(i + 1) {
            if let Some(p) = graph.probability(Pair::new(a.min(b), a.max(b)).unwrap()) {
                out.push((i, j, p));
            }
        }
    }
    out
}

/// Reliability by brute force: block connectivities from world enumeration,
/// disconnectivities as one minus the product of spanning YES fractions.
pub fn brute_reliability(graph: &UncertainGraph, clustering: &Clustering) -> f64 {
    let clamp = |x: f64| x.max(1e-12).log10();
    let mut total = 0.0;
    for block in clustering.blocks() {
        total += clamp(brute_connectivity(block.len(), &block_edges(graph, block)));
    }
    for j in 0..clustering.len() {
        for k in j + 1..clustering.len() {
            let mut product = 1.0;
            let mut any = false;
            for &a in clustering.block(j) {
                for &b in clustering.block(k) {
                    if let Some(p) = graph.probability(Pair::new(a.min(b), a.max(b)).unwrap()) {
                        product *= p;
                        any = true;
                    }
                }
            }
            total += clamp(if any { 1.0 - product } else { 0.0 });
        }
    }
    total
}

/// Random spanning tree over `n` nodes plus extra random edges, up to
/// `edges` in total, with YES fractions from `yes/total`.
pub fn random_connected<R: Rng>(
    rng: &mut R,
    n: usize,
    edges: usize,
    total: u32,
    yes: impl Fn(&mut R) -> u32,
) -> Vec<(usize, usize, u32, u32)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut chosen = Vec::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i].min(order[j]), order[i].max(order[j]));
        chosen.push((a, b));
    }
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|e| !chosen.contains(e))
        .collect();
    rest.shuffle(rng);
    chosen.extend(rest.into_iter().take(edges.saturating_sub(chosen.len())));
    chosen
        .into_iter()
        .map(|(a, b)| (a, b, yes(rng), total))
        .collect()
}

/// Random graph over `n` records with each pair present with probability
/// `density` and a YES count drawn uniformly from `0..=total`.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, density: f64, total: u32) -> Vec<(usize, usize, u32, u32)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(density) {
                out.push((a, b, rng.gen_range(0..=total), total));
            }
        }
    }
    out
}

/// Every pair of records in the same block.
pub fn matching_pairs(clustering: &Clustering) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for block in clustering.blocks() {
        for (i, &a) in block.iter().enumerate() {
            for &b in &block[i + 1..] {
                out.push((a, b));
            }
        }
    }
    out
}

/// Small graph description: record count plus an optional YES count (out of
/// `total`) per pair in `(0,1), (0,2), ..., (n-2,n-1)` order.
#[derive(Clone, Debug)]
pub struct SmallGraph {
    pub n: usize,
    pub total: u32,
    pub tallies: Vec<Option<u32>>,
    pub labels: Vec<usize>,
}

impl SmallGraph {
    pub fn votes(&self) -> Vec<(usize, usize, u32, u32)> {
        let mut out = Vec::new();
        let mut i = 0;
        for a in 0..self.n {
            for b in a + 1..self.n {
                if let Some(yes) = self.tallies[i] {
                    out.push((a, b, yes, self.total));
                }
                i += 1;
            }
        }
        out
    }

    pub fn graph(&self) -> UncertainGraph {
        indexed_graph(self.n, &self.votes())
    }

    /// A clustering drawn alongside the graph.
    pub fn clustering(&self) -> Clustering {
        Clustering::from_labels(&self.labels)
    }
}

/// Graphs over `min..=max` records where each pair is present with
/// probability about one half.
pub fn small_graph(min: usize, max: usize, total: u32) -> impl proptest::strategy::Strategy<Value = SmallGraph> {
    use proptest::prelude::*;
    (min..=max).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(proptest::option::of(0..=total), pairs),
            proptest::collection::vec(0..3usize, n),
        )
            .prop_map(move |(tallies, labels)| SmallGraph {
                n,
                total,
                tallies,
                labels,
            })
    })
}
