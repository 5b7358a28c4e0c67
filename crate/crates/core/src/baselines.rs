//! Comparison strategies for question selection.
//!
//! * Transitive closure: majority-vote each answer, infer what transitivity
//!   and anti-transitivity allow, and ask a uniformly random pair that cannot
//!   be inferred.
//! * Dense: score every pair of blocks by the ρ-ratio, which is large when
//!   the evidence separating or joining them is weak, and ask inside the
//!   block pair with the largest ratio.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;

use crate::graph::{Clustering, Pair, UncertainGraph};
use crate::hash::combine;
use crate::next::{allowed, CandidateFilter};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Match,
    NonMatch,
    Undecided,
}

impl Verdict {
    pub fn of(p: f64) -> Self {
        if p > 0.5 {
            Verdict::Match
        } else if p < 0.5 {
            Verdict::NonMatch
        } else {
            Verdict::Undecided
        }
    }
}

/// Majority verdict of every crowdsourced edge.
#[derive(Clone, Debug)]
pub struct MajorityView {
    verdicts: BTreeMap<Pair, Verdict>,
}

impl MajorityView {
    pub fn new(graph: &UncertainGraph) -> Self {
        Self {
            verdicts: graph.edges().map(|(pair, e)| (pair, Verdict::of(e.p))).collect(),
        }
    }

    pub fn verdict(&self, pair: Pair) -> Option<Verdict> {
        self.verdicts.get(&pair).copied()
    }
}

/// What can be inferred from majority answers alone.
#[derive(Clone, Debug)]
pub struct Inference {
    component: Vec<usize>,
    separated: HashSet<(usize, usize)>,
}

impl Inference {
    pub fn new(graph: &UncertainGraph) -> Self {
        let view = MajorityView::new(graph);
        let n = graph.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (&pair, &verdict) in &view.verdicts {
            if verdict == Verdict::Match {
                let (a, b) = (find(&mut parent, pair.lo()), find(&mut parent, pair.hi()));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let component: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        let separated = view
            .verdicts
            .iter()
            .filter(|&(_, &v)| v == Verdict::NonMatch)
            .map(|(pair, _)| {
                let (a, b) = (component[pair.lo()], component[pair.hi()]);
                (a.min(b), a.max(b))
            })
            .collect();
        Self {
            component,
            separated,
        }
    }

    /// `Some(true)` for an inferred match, `Some(false)` for an inferred
    /// non-match, `None` when the pair cannot be inferred.
    pub fn infer(&self, pair: Pair) -> Option<bool> {
        let (a, b) = (self.component[pair.lo()], self.component[pair.hi()]);
        if a == b {
            Some(true)
        } else if self.separated.contains(&(a.min(b), a.max(b))) {
            Some(false)
        } else {
            None
        }
    }
}

/// Absent pairs that cannot be inferred from majority answers.
pub fn uninferable_pairs(graph: &UncertainGraph, filter: &CandidateFilter) -> Vec<Pair> {
    let inference = Inference::new(graph);
    let n = graph.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let pair = Pair::new(a, b).expect("a < b");
            if !graph.contains(pair) && allowed(filter, pair) && inference.infer(pair).is_none() {
                out.push(pair);
            }
        }
    }
    out
}

/// One uniformly random uninferable pair; `None` when every pair is known
/// or inferable.
pub fn tc_next<R: Rng + ?Sized>(graph: &UncertainGraph, rng: &mut R) -> Option<Pair> {
    tc_batch(graph, rng, 1, &None).into_iter().next()
}

/// Up to `k` distinct uniformly random uninferable pairs.
///
/// Each call draws one salt from `rng` and ranks candidates by a hash of
/// `(salt, pair)`. Restricting the candidate set therefore never changes
/// which of the remaining candidates win, which keeps replays of recorded
/// runs identical.
pub fn tc_batch<R: Rng + ?Sized>(
    graph: &UncertainGraph,
    rng: &mut R,
    k: usize,
    filter: &CandidateFilter,
) -> Vec<Pair> {
    let salt = rng.next_u64();
    let mut keyed: Vec<(u64, Pair)> = uninferable_pairs(graph, filter)
        .into_iter()
        .map(|pair| (combine(salt, graph.pair_hash(pair)), pair))
        .collect();
    keyed.sort_unstable();
    keyed.into_iter().take(k).map(|(_, pair)| pair).collect()
}

/// Positive and negative edge sets around two blocks, with each edge's
/// probability of being correct.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RhoInputs {
    /// Positive edges from `A` to records outside `A` and `B`.
    pub y1: Vec<f64>,
    /// Positive edges from `B` to records outside `A` and `B`.
    pub y2: Vec<f64>,
    /// Positive edges across `A` and `B`.
    pub y: Vec<f64>,
    /// Negative edges across `A` and `B`.
    pub n: Vec<f64>,
}

impl RhoInputs {
    /// Edges with exactly one half of the votes are neither positive nor
    /// negative and are left out.
    pub fn collect(graph: &UncertainGraph, block_a: &[usize], block_b: &[usize]) -> Self {
        let mut side = vec![0u8; graph.len()];
        for &r in block_a {
            side[r] = 1;
        }
        for &r in block_b {
            side[r] = 2;
        }
        let mut inputs = RhoInputs::default();
        for (pair, e) in graph.edges() {
            let (correct, positive) = match Verdict::of(e.p) {
                Verdict::Match => (e.p, true),
                Verdict::NonMatch => (1.0 - e.p, false),
                Verdict::Undecided => continue,
            };
            let sides = {
                let (x, y) = (side[pair.lo()], side[pair.hi()]);
                (x.min(y), x.max(y))
            };
            match (sides, positive) {
                ((1, 2), true) => inputs.y.push(correct),
                ((1, 2), false) => inputs.n.push(correct),
                ((0, 1), true) => inputs.y1.push(correct),
                ((0, 2), true) => inputs.y2.push(correct),
                _ => {}
            }
        }
        inputs
    }

    /// `prod (1 - p) / prod p`; one for an empty set.
    fn weakness(edges: &[f64]) -> f64 {
        edges.iter().map(|p| (1.0 - p) / p).product()
    }

    /// The `min` factor over whichever of `N` and `Y` are non-empty; one if
    /// both are empty.
    pub fn min_factor(&self) -> f64 {
        let terms = [&self.n, &self.y]
            .into_iter()
            .filter(|set| !set.is_empty())
            .map(|set| Self::weakness(set));
        terms.reduce(f64::min).unwrap_or(1.0)
    }

    pub fn ratio(&self) -> f64 {
        Self::weakness(&self.y1) * Self::weakness(&self.y2) * self.min_factor()
    }
}

/// Polar edges leaving each block: `(other block, correctness, positive)`.
struct PolarIndex {
    leaving: Vec<Vec<(usize, f64, bool)>>,
}

impl PolarIndex {
    fn new(graph: &UncertainGraph, clustering: &Clustering) -> Self {
        let mut leaving = vec![Vec::new(); clustering.len()];
        for (pair, e) in graph.edges() {
            let (correct, positive) = match Verdict::of(e.p) {
                Verdict::Match => (e.p, true),
                Verdict::NonMatch => (1.0 - e.p, false),
                Verdict::Undecided => continue,
            };
            let (bj, bk) = (clustering.block_of(pair.lo()), clustering.block_of(pair.hi()));
            if bj != bk {
                leaving[bj].push((bk, correct, positive));
                leaving[bk].push((bj, correct, positive));
            }
        }
        Self { leaving }
    }

    /// Same sets as [`RhoInputs::collect`] for blocks `a` and `b`.
    fn inputs(&self, a: usize, b: usize) -> RhoInputs {
        let mut inputs = RhoInputs::default();
        for &(other, correct, positive) in &self.leaving[a] {
            match (other == b, positive) {
                (true, true) => inputs.y.push(correct),
                (true, false) => inputs.n.push(correct),
                (false, true) => inputs.y1.push(correct),
                (false, false) => {}
            }
        }
        for &(other, correct, positive) in &self.leaving[b] {
            if other != a && positive {
                inputs.y2.push(correct);
            }
        }
        inputs
    }
}

pub fn rho_ratio(graph: &UncertainGraph, block_a: &[usize], block_b: &[usize]) -> f64 {
    RhoInputs::collect(graph, block_a, block_b).ratio()
}

/// Pair across the block pair with the largest ρ-ratio; `None` when no
/// absent inter-block pair remains.
pub fn dense_next(graph: &UncertainGraph, clustering: &Clustering) -> Option<Pair> {
    dense_batch(graph, clustering, 1, &None).into_iter().next()
}

/// Representatives of the `k` block pairs with the largest ρ-ratios, ties
/// broken by representative pair. If fewer than `k` block pairs remain, the
/// batch is filled with further absent pairs of the chosen block pairs.
pub fn dense_batch(
    graph: &UncertainGraph,
    clustering: &Clustering,
    k: usize,
    filter: &CandidateFilter,
) -> Vec<Pair> {
    let m = clustering.len();
    let index = PolarIndex::new(graph, clustering);
    let mut scored: Vec<(f64, Vec<Pair>)> = Vec::new();
    for j in 0..m {
        for l in j + 1..m {
            let mut absent: Vec<Pair> = clustering
                .block(j)
                .iter()
                .flat_map(|&a| clustering.block(l).iter().filter_map(move |&b| Pair::new(a, b)))
                .filter(|&pair| !graph.contains(pair) && allowed(filter, pair))
                .collect();
            if absent.is_empty() {
                continue;
            }
            absent.sort_unstable();
            let rho = index.inputs(j, l).ratio();
            scored.push((rho, absent));
        }
    }
    scored.sort_by(|(ra, pa), (rb, pb)| rb.total_cmp(ra).then_with(|| pa[0].cmp(&pb[0])));
    let mut batch: Vec<Pair> = scored.iter().take(k).map(|(_, ps)| ps[0]).collect();
    let chosen = batch.len();
    'fill: for (_, pairs) in scored.iter().take(chosen) {
        for &pair in &pairs[1..] {
            if batch.len() >= k {
                break 'fill;
            }
            batch.push(pair);
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{RecordId, VoteTally};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(names: &[&str], votes: &[(&str, &str, u32, u32)]) -> UncertainGraph {
        UncertainGraph::ingest_votes(
            names.iter().map(|n| RecordId::new(*n).unwrap()),
            votes.iter().map(|&(a, b, y, t)| {
                (
                    RecordId::new(a).unwrap(),
                    RecordId::new(b).unwrap(),
                    VoteTally::new(y, t).unwrap(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn transitivity_is_never_asked() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 4, 5), ("B", "C", 4, 5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(tc_next(&g, &mut rng), None);
        assert_eq!(Inference::new(&g).infer(Pair::new(0, 2).unwrap()), Some(true));
    }

    #[test]
    fn anti_transitivity_is_never_asked() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 4, 5), ("B", "C", 1, 5)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(tc_next(&g, &mut rng), None);
        assert_eq!(Inference::new(&g).infer(Pair::new(0, 2).unwrap()), Some(false));
    }

    #[test]
    fn undecided_edges_infer_nothing() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 1, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let batch = tc_batch(&g, &mut rng, 5, &None);
        assert_eq!(batch.len(), 2);
        assert!(!batch.contains(&Pair::new(0, 1).unwrap()));
    }

    #[test]
    fn verdict_thresholds() {
        assert_eq!(Verdict::of(0.6), Verdict::Match);
        assert_eq!(Verdict::of(0.4), Verdict::NonMatch);
        assert_eq!(Verdict::of(0.5), Verdict::Undecided);
    }

    #[test]
    fn rho_of_certain_and_empty_evidence() {
        let g = graph(&["A", "B", "C", "D"], &[("A", "C", 0, 5), ("B", "D", 5, 5)]);
        assert_eq!(rho_ratio(&g, &[0, 1], &[2, 3]), 0.0);
        let g = graph(&["A", "B", "C", "D"], &[]);
        assert_eq!(rho_ratio(&g, &[0, 1], &[2, 3]), 1.0);
    }

    #[test]
    fn rho_symmetric() {
        let g = graph(
            &["A", "B", "C", "D", "E"],
            &[("A", "C", 2, 5), ("B", "D", 4, 5), ("A", "E", 3, 5), ("C", "E", 4, 5), ("A", "B", 5, 5)],
        );
        let ab = rho_ratio(&g, &[0, 1], &[2, 3]);
        let ba = rho_ratio(&g, &[2, 3], &[0, 1]);
        assert!((ab - ba).abs() < 1e-15);
        // Internal edge A-B of the first block is not part of Y1.
        let inputs = RhoInputs::collect(&g, &[0, 1], &[2, 3]);
        assert_eq!(inputs.y1, vec![0.6]);
        assert_eq!(inputs.y2, vec![0.8]);
    }

    #[test]
    fn dense_prefers_weak_block_pair() {
        // Blocks {A,B}, {C,D}, {E}: A-C strong NO, B-E weak NO.
        let g = graph(
            &["A", "B", "C", "D", "E"],
            &[("A", "B", 5, 5), ("C", "D", 5, 5), ("A", "C", 0, 5), ("B", "E", 2, 5), ("D", "E", 0, 5)],
        );
        let c = Clustering::new(5, vec![vec![0, 1], vec![2, 3], vec![4]]).unwrap();
        assert_eq!(dense_next(&g, &c), Some(Pair::new(0, 4).unwrap()));
        let all = dense_batch(&g, &c, 10, &None);
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn index_matches_direct_collection() {
        let g = graph(
            &["A", "B", "C", "D", "E", "F"],
            &[
                ("A", "B", 5, 5),
                ("A", "C", 1, 5),
                ("B", "D", 4, 5),
                ("C", "E", 3, 5),
                ("D", "F", 2, 4),
                ("E", "F", 4, 5),
                ("A", "F", 3, 5),
            ],
        );
        let c = Clustering::new(6, vec![vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        let index = PolarIndex::new(&g, &c);
        for j in 0..c.len() {
            for l in 0..c.len() {
                if j != l {
                    assert_eq!(index.inputs(j, l), RhoInputs::collect(&g, c.block(j), c.block(l)));
                }
            }
        }
    }
}
