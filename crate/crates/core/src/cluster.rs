//! Maximum-likelihood clustering.
//!
//! [`scc_cluster`] is the agglomerative heuristic used in production: start
//! from singletons and keep merging the block pair with the highest merge
//! probability while that probability is strictly above one half. Block pairs
//! without any crowdsourced edge between them are never merge candidates.
//!
//! [`mlc_bruteforce`] evaluates every partition and is the exact oracle for
//! small graphs.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::graph::{
    clustering_log_likelihood, enumerate_partitions, yes_no_probability, Clustering, Pair,
    UncertainGraph,
};

/// Upper bound on the record count accepted by [`mlc_bruteforce`].
pub const MAX_BRUTEFORCE_RECORDS: usize = 10;

/// Accumulated natural-log evidence for merging two blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Evidence {
    log_yes: f64,
    log_no: f64,
}

impl Evidence {
    fn add(&mut self, p: f64) {
        self.log_yes += p.ln();
        self.log_no += (1.0 - p).ln();
    }

    fn merge(&mut self, other: Evidence) {
        self.log_yes += other.log_yes;
        self.log_no += other.log_no;
    }

    /// `prod p / (prod p + prod (1 - p))`, evaluated in log space.
    fn probability(self) -> f64 {
        match (self.log_yes.is_finite(), self.log_no.is_finite()) {
            (true, true) => 1.0 / (1.0 + (self.log_no - self.log_yes).exp()),
            (false, true) => 0.0,
            (true, false) => 1.0,
            // Certain YES and certain NO evidence at once.
            (false, false) => 0.5,
        }
    }
}

/// Probability that two blocks are the same entity given the answers between
/// them. `None` when no crowdsourced edge spans the blocks.
pub fn merge_probability(graph: &UncertainGraph, block_a: &[usize], block_b: &[usize]) -> Option<f64> {
    let mut evidence = Evidence::default();
    let mut any = false;
    for &a in block_a {
        for &b in block_b {
            if let Some(p) = Pair::new(a, b).and_then(|pair| graph.probability(pair)) {
                evidence.add(p);
                any = true;
            }
        }
    }
    any.then(|| evidence.probability())
}

/// Agglomerative clustering by merge probability.
///
/// Among equally probable merges, the pair of blocks whose minimum members
/// are lexicographically smallest goes first.
pub fn scc_cluster(graph: &UncertainGraph) -> Clustering {
    let n = graph.len();
    // Blocks are keyed by their minimum member; a merged block keeps the
    // smaller key, which is again its minimum member.
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut evidence: HashMap<(usize, usize), Evidence> = HashMap::new();
    for (pair, e) in graph.edges() {
        evidence.entry((pair.lo(), pair.hi())).or_default().add(e.p);
        neighbors[pair.lo()].insert(pair.hi());
        neighbors[pair.hi()].insert(pair.lo());
    }

    loop {
        let best = evidence
            .iter()
            .map(|(&key, ev)| (key, ev.probability()))
            .filter(|&(_, prob)| prob > 0.5)
            .max_by(|(ka, pa), (kb, pb)| pa.total_cmp(pb).then_with(|| kb.cmp(ka)));
        let Some(((keep, gone), _)) = best else {
            break;
        };
        evidence.remove(&(keep, gone));
        let moved = std::mem::take(&mut members[gone]);
        members[keep].extend(moved);
        let gone_neighbors = std::mem::take(&mut neighbors[gone]);
        neighbors[keep].remove(&gone);
        for w in gone_neighbors {
            if w == keep {
                continue;
            }
            let ev = evidence
                .remove(&(gone.min(w), gone.max(w)))
                .expect("neighbor evidence present");
            evidence.entry((keep.min(w), keep.max(w))).or_default().merge(ev);
            neighbors[w].remove(&gone);
            neighbors[w].insert(keep);
            neighbors[keep].insert(w);
        }
    }

    let blocks = members.into_iter().filter(|m| !m.is_empty()).collect();
    Clustering::new(n, blocks).expect("merging singletons keeps a partition")
}

/// Exact maximum-likelihood clustering by exhaustive search.
///
/// Likelihood ties go to the clustering with fewer blocks, then to the
/// lexicographically smaller canonical form.
pub fn mlc_bruteforce(graph: &UncertainGraph) -> Result<Clustering> {
    if graph.len() > MAX_BRUTEFORCE_RECORDS {
        return Err(Error::TooManyRecords {
            what: "brute-force clustering",
            limit: MAX_BRUTEFORCE_RECORDS,
            got: graph.len(),
        });
    }
    let mut best: Option<(f64, Clustering)> = None;
    for candidate in enumerate_partitions(graph.len())? {
        let ll = clustering_log_likelihood(graph, &candidate)?;
        let better = match &best {
            None => true,
            Some((best_ll, incumbent)) => match compare_likelihood(ll, *best_ll) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    (candidate.len(), candidate.blocks()) < (incumbent.len(), incumbent.blocks())
                }
            },
        };
        if better {
            best = Some((ll, candidate));
        }
    }
    Ok(best.expect("at least one partition").1)
}

/// Log-likelihoods within a relative 1e-12 are considered tied.
pub(crate) fn compare_likelihood(a: f64, b: f64) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    if a.is_finite() && b.is_finite() && (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0) {
        return Ordering::Equal;
    }
    a.total_cmp(&b)
}

/// True when an edge answered with YES fraction `p` agrees with `prev` by a
/// strict majority, in which case `prev` remains the most likely clustering.
pub fn mlc_unchanged(prev: &Clustering, new_edge: Pair, p: f64) -> bool {
    yes_no_probability(p, prev.same_block(new_edge.lo(), new_edge.hi())) > 0.5
}
