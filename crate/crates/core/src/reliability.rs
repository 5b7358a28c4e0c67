//! Connectivity, disconnectivity, and the reliability score of a clustering.
//!
//! Connectivity of a block is the probability that its members are connected
//! by realized YES edges. It is computed exactly by enumerating the uncertain
//! intra-block edges when there are at most `exact_edge_limit` of them, and by
//! Monte Carlo sampling otherwise. Disconnectivity of two blocks has a closed
//! form. Reliability is the sum of base-10 logs of all components, with zero
//! components clamped to `epsilon`.
//!
//! Monte Carlo worlds are sampled lazily during a BFS from the minimum member.
//! The coin of edge `e` in world `s` is a pure function of `(seed, s, e)`, so
//! two evaluations that share a seed see the same realization of every edge
//! they have in common.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::graph::{Clustering, Pair, UncertainGraph};
use crate::hash::{combine, unit_interval};

/// Exact evaluation enumerates `2^edges` worlds; this keeps it bounded.
pub const MAX_EXACT_EDGE_LIMIT: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityParams {
    /// Worlds sampled per Monte Carlo estimate.
    pub mc_samples: usize,
    /// Substitute for zero components before taking logs.
    pub epsilon: f64,
    /// Largest number of uncertain intra-block edges evaluated exactly.
    pub exact_edge_limit: usize,
    pub seed: u64,
    /// When set, at most this many intra-block candidate pairs per block are
    /// scored each round, drawn uniformly at random.
    pub intra_pair_sample: Option<usize>,
}

impl Default for ReliabilityParams {
    fn default() -> Self {
        Self {
            mc_samples: 1000,
            epsilon: 1e-12,
            exact_edge_limit: 18,
            seed: 0,
            intra_pair_sample: None,
        }
    }
}

impl ReliabilityParams {
    pub fn validate(&self) -> Result<()> {
        if self.mc_samples == 0 {
            return Err(Error::InvalidParams("mc_samples must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1e-3) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in (0, 1e-3), got {}",
                self.epsilon
            )));
        }
        if self.exact_edge_limit > MAX_EXACT_EDGE_LIMIT {
            return Err(Error::InvalidParams(format!(
                "exact_edge_limit must be at most {MAX_EXACT_EDGE_LIMIT}, got {}",
                self.exact_edge_limit
            )));
        }
        if self.intra_pair_sample == Some(0) {
            return Err(Error::InvalidParams("intra_pair_sample must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub(crate) fn clamped_log(&self, x: f64) -> f64 {
        x.max(self.epsilon).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectivityEstimate {
    pub value: f64,
    pub method: Method,
    /// Zero for exact estimates.
    pub samples: usize,
    /// Sampling seed; zero for exact estimates.
    pub seed: u64,
}

impl ConnectivityEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            method: Method::Exact,
            samples: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockPairDisconnect {
    pub block_j: usize,
    pub block_k: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReliabilityScore {
    /// Base-10 log score.
    pub value: f64,
    pub per_block_connect: Vec<ConnectivityEstimate>,
    /// One entry per block pair `j < k`, in lexicographic order.
    pub per_pair_disconnect: Vec<BlockPairDisconnect>,
}

/// Intra-block subgraph in local coordinates.
#[derive(Clone, Debug)]
pub(crate) struct BlockGraph {
    size: usize,
    /// `(u, v, p_yes, coin key)` with `u < v` local indices.
    edges: Vec<(usize, usize, f64, u64)>,
}

impl BlockGraph {
    pub(crate) fn extract(graph: &UncertainGraph, block: &[usize]) -> Self {
        let mut edges = Vec::new();
        for (i, &a) in block.iter().enumerate() {
            for (j, &b) in block.iter().enumerate().skip(i + 1) {
                if let Some(pair) = Pair::new(a, b) {
                    if let Some(e) = graph.edge(pair) {
                        edges.push((i, j, e.p, graph.pair_hash(pair)));
                    }
                }
            }
        }
        Self {
            size: block.len(),
            edges,
        }
    }

    /// Copy with one extra edge for `pair`, given in global indices.
    pub(crate) fn with_edge(&self, graph: &UncertainGraph, block: &[usize], pair: Pair, p: f64) -> Self {
        let local = |r: usize| block.iter().position(|&m| m == r).expect("pair inside block");
        let mut out = self.clone();
        out.edges
            .push((local(pair.lo()), local(pair.hi()), p, graph.pair_hash(pair)));
        out
    }

    pub(crate) fn uncertain_edges(&self) -> usize {
        self.edges
            .iter()
            .filter(|&&(_, _, p, _)| p > 0.0 && p < 1.0)
            .count()
    }

    fn exact(&self, limit: usize) -> Result<f64> {
        if self.size <= 1 {
            return Ok(1.0);
        }
        let uncertain: Vec<(usize, usize, f64)> = self
            .edges
            .iter()
            .filter(|&&(_, _, p, _)| p > 0.0 && p < 1.0)
            .map(|&(u, v, p, _)| (u, v, p))
            .collect();
        if uncertain.len() > limit {
            return Err(Error::EdgeLimitExceeded {
                edges: uncertain.len(),
                limit,
            });
        }
        // Certain edges are present in every world.
        let mut base = Dsu::new(self.size);
        for &(u, v, p, _) in &self.edges {
            if p >= 1.0 {
                base.union(u, v);
            }
        }
        if base.components == 1 {
            return Ok(1.0);
        }
        let m = uncertain.len();
        let mut total = 0.0;
        let mut dsu = base.clone();
        for mask in 0u64..(1u64 << m) {
            dsu.clone_from(&base);
            let mut prob = 1.0;
            for (bit, &(u, v, p)) in uncertain.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    prob *= p;
                    dsu.union(u, v);
                } else {
                    prob *= 1.0 - p;
                }
            }
            if dsu.components == 1 {
                total += prob;
            }
        }
        Ok(total.clamp(0.0, 1.0))
    }

    fn monte_carlo(&self, samples: usize, seed: u64) -> f64 {
        if self.size <= 1 {
            return 1.0;
        }
        let mut adjacency: Vec<Vec<(usize, f64, u64)>> = vec![Vec::new(); self.size];
        for &(u, v, p, key) in &self.edges {
            if p > 0.0 {
                adjacency[u].push((v, p, key));
                adjacency[v].push((u, p, key));
            }
        }
        if adjacency.iter().any(Vec::is_empty) {
            return 0.0;
        }
        let mut visited = vec![false; self.size];
        let mut queue = VecDeque::with_capacity(self.size);
        let mut connected = 0usize;
        for s in 0..samples {
            let world = combine(seed, s as u64);
            visited.iter_mut().for_each(|v| *v = false);
            visited[0] = true;
            queue.clear();
            queue.push_back(0);
            let mut reached = 1;
            'bfs: while let Some(u) = queue.pop_front() {
                for &(v, p, key) in &adjacency[u] {
                    if visited[v] || !(p >= 1.0 || unit_interval(combine(world, key)) < p) {
                        continue;
                    }
                    visited[v] = true;
                    reached += 1;
                    if reached == self.size {
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
            if reached == self.size {
                connected += 1;
            }
        }
        connected as f64 / samples as f64
    }

    /// Exact when within the edge limit, otherwise Monte Carlo with `seed`.
    pub(crate) fn connectivity(&self, params: &ReliabilityParams, seed: u64) -> ConnectivityEstimate {
        if self.uncertain_edges() <= params.exact_edge_limit {
            let value = self.exact(params.exact_edge_limit).expect("within limit");
            ConnectivityEstimate::exact(value)
        } else {
            ConnectivityEstimate {
                value: self.monte_carlo(params.mc_samples, seed),
                method: Method::MonteCarlo,
                samples: params.mc_samples,
                seed,
            }
        }
    }
}

#[derive(Clone, Debug)]
struct Dsu {
    parent: Vec<usize>,
    components: usize,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            components: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
            self.components -= 1;
        }
    }
}

/// Stable hash of a block's member ids.
pub(crate) fn block_hash(graph: &UncertainGraph, block: &[usize]) -> u64 {
    block
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |h, &r| combine(h, graph.record(r).stable_hash()))
}

/// Sampling seed of a block under a given (round) seed.
pub(crate) fn block_seed(graph: &UncertainGraph, block: &[usize], seed: u64) -> u64 {
    combine(seed, block_hash(graph, block))
}

fn check_block(graph: &UncertainGraph, block: &[usize]) -> Result<Vec<usize>> {
    if block.is_empty() {
        return Err(Error::InvalidParams("block must be non-empty".into()));
    }
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&r) = sorted.iter().find(|&&r| r >= graph.len()) {
        return Err(Error::UnknownRecord(format!("#{r}")));
    }
    Ok(sorted)
}

/// Probability that at least one NO edge between blocks `j` and `k` exists.
/// Zero when no crowdsourced edge spans them.
pub fn disconnectivity(
    graph: &UncertainGraph,
    clustering: &Clustering,
    block_j: usize,
    block_k: usize,
) -> Result<f64> {
    clustering.check_universe(graph)?;
    for b in [block_j, block_k] {
        if b >= clustering.len() {
            return Err(Error::UnknownBlock(b));
        }
    }
    if block_j == block_k {
        return Err(Error::SameBlock);
    }
    let spanning = clustering.block(block_j).iter().flat_map(|&a| {
        clustering
            .block(block_k)
            .iter()
            .filter_map(move |&b| Pair::new(a, b))
    });
    Ok(disconnect_from_yes(spanning.filter_map(|pair| graph.probability(pair))))
}

/// `1 - prod(1 - p_N)` over spanning edges given their YES fractions, since
/// `1 - p_N = p`. Zero for an empty edge set.
pub(crate) fn disconnect_from_yes(yes: impl IntoIterator<Item = f64>) -> f64 {
    let mut any = false;
    let product: f64 = yes
        .into_iter()
        .inspect(|_| any = true)
        .product();
    if any {
        1.0 - product
    } else {
        0.0
    }
}

/// Exact connectivity of `block` by enumerating its uncertain YES edges.
pub fn connectivity_exact(
    graph: &UncertainGraph,
    block: &[usize],
    params: &ReliabilityParams,
) -> Result<ConnectivityEstimate> {
    let block = check_block(graph, block)?;
    let value = BlockGraph::extract(graph, &block).exact(params.exact_edge_limit)?;
    Ok(ConnectivityEstimate::exact(value))
}

/// Monte Carlo connectivity of `block` using `params.mc_samples` worlds and
/// `params.seed`.
pub fn connectivity_mc(
    graph: &UncertainGraph,
    block: &[usize],
    params: &ReliabilityParams,
) -> Result<ConnectivityEstimate> {
    params.validate()?;
    let block = check_block(graph, block)?;
    let value = BlockGraph::extract(graph, &block).monte_carlo(params.mc_samples, params.seed);
    Ok(ConnectivityEstimate {
        value,
        method: Method::MonteCarlo,
        samples: params.mc_samples,
        seed: params.seed,
    })
}

/// Connectivity of `block`: exact when within the edge limit, otherwise Monte
/// Carlo with a seed derived from `params.seed` and the block's members.
pub fn connectivity(
    graph: &UncertainGraph,
    block: &[usize],
    params: &ReliabilityParams,
) -> Result<ConnectivityEstimate> {
    params.validate()?;
    let block = check_block(graph, block)?;
    let seed = block_seed(graph, &block, params.seed);
    Ok(BlockGraph::extract(graph, &block).connectivity(params, seed))
}

/// Spanning-edge YES fractions grouped by block pair `(j, k)`, `j < k`.
pub(crate) fn spanning_by_block_pair(
    graph: &UncertainGraph,
    clustering: &Clustering,
) -> HashMap<(usize, usize), Vec<f64>> {
    let mut groups: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    for (pair, e) in graph.edges() {
        let (bj, bk) = (clustering.block_of(pair.lo()), clustering.block_of(pair.hi()));
        if bj != bk {
            groups.entry((bj.min(bk), bj.max(bk))).or_default().push(e.p);
        }
    }
    groups
}

/// Reliability of a clustering.
pub fn reliability(
    graph: &UncertainGraph,
    clustering: &Clustering,
    params: &ReliabilityParams,
) -> Result<ReliabilityScore> {
    params.validate()?;
    clustering.check_universe(graph)?;
    let per_block_connect: Vec<ConnectivityEstimate> = clustering
        .blocks()
        .iter()
        .map(|block| {
            let seed = block_seed(graph, block, params.seed);
            BlockGraph::extract(graph, block).connectivity(params, seed)
        })
        .collect();
    let spanning = spanning_by_block_pair(graph, clustering);
    let m = clustering.len();
    let mut per_pair_disconnect = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for j in 0..m {
        for k in j + 1..m {
            let value = spanning
                .get(&(j, k))
                .map_or(0.0, |ps| disconnect_from_yes(ps.iter().copied()));
            per_pair_disconnect.push(BlockPairDisconnect {
                block_j: j,
                block_k: k,
                value,
            });
        }
    }
    let value = per_block_connect
        .iter()
        .map(|c| params.clamped_log(c.value))
        .chain(per_pair_disconnect.iter().map(|d| params.clamped_log(d.value)))
        .sum();
    Ok(ReliabilityScore {
        value,
        per_block_connect,
        per_pair_disconnect,
    })
}
