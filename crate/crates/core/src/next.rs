//! Reliability-gain priorities and next-question selection.
//!
//! The priority of an un-crowdsourced pair is the increase in reliability of
//! the current clustering if the pair were answered in full agreement with
//! it: a YES edge with probability one inside a block, a NO edge with
//! probability one across blocks. Only the component touched by the
//! hypothetical edge changes, so an intra-block priority is
//! `log Connect'(R_i) - log Connect(R_i)` and an inter-block priority is
//! `-log Disconnect(R_j, R_k)`.
//!
//! Every absent pair spanning the same two blocks shares one priority, so the
//! queue holds a single representative per block pair: the lexicographically
//! smallest absent spanning pair.
//!
//! When the clustering did not change after an answer, only the entries of
//! the block (or block pair) that received the answer are recomputed.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Clustering, Pair, UncertainGraph};
use crate::hash::combine;
use crate::reliability::{block_seed, disconnect_from_yes, BlockGraph, ReliabilityParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Intra { block: usize },
    Inter { block_j: usize, block_k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidatePriority {
    pub pair: Pair,
    /// Base-10 reliability increase.
    pub gain: f64,
    pub scope: Scope,
}

/// Queue ordering: higher gain first, then smaller pair.
#[derive(Clone, Copy, Debug)]
struct Ranked {
    gain: f64,
    pair: Pair,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .gain
            .total_cmp(&self.gain)
            .then_with(|| self.pair.cmp(&other.pair))
    }
}

/// Set of pairs a strategy may propose; `None` allows every pair.
pub type CandidateFilter = Option<Arc<HashSet<Pair>>>;

pub(crate) fn allowed(filter: &CandidateFilter, pair: Pair) -> bool {
    filter.as_ref().is_none_or(|set| set.contains(&pair))
}

/// Seed used for all sampling in a given round.
pub(crate) fn round_seed(master: u64, round: u64) -> u64 {
    combine(master, round)
}

/// Priority queue over candidate pairs with the bookkeeping needed to
/// refresh it incrementally.
#[derive(Clone, Debug)]
pub struct PriorityState {
    queue: BTreeSet<Ranked>,
    entries: HashMap<Pair, CandidatePriority>,
    /// Intra-block candidates currently queued, per block.
    intra: HashMap<usize, Vec<Pair>>,
    /// Representative of each block pair that still has an absent pair.
    representatives: HashMap<(usize, usize), Pair>,
    /// Remaining absent spanning pairs of each block pair, after the
    /// representative, in pair order.
    others: HashMap<(usize, usize), Vec<Pair>>,
    round: u64,
    last_insertion: Option<Scope>,
    clustering_changed: bool,
    last_recomputed: usize,
    filter: CandidateFilter,
}

impl PriorityState {
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn last_insertion(&self) -> Option<Scope> {
        self.last_insertion
    }

    pub fn clustering_changed(&self) -> bool {
        self.clustering_changed
    }

    /// Number of priorities computed by the most recent build or refresh.
    pub fn last_recomputed(&self) -> usize {
        self.last_recomputed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, pair: Pair) -> Option<&CandidatePriority> {
        self.entries.get(&pair)
    }

    /// Queue contents, best first.
    pub fn ranked(&self) -> impl Iterator<Item = &CandidatePriority> + '_ {
        self.queue.iter().map(|r| &self.entries[&r.pair])
    }

    fn push(&mut self, candidate: CandidatePriority) {
        self.last_recomputed += 1;
        if let Some(old) = self.entries.insert(candidate.pair, candidate) {
            self.queue.remove(&Ranked {
                gain: old.gain,
                pair: old.pair,
            });
        }
        self.queue.insert(Ranked {
            gain: candidate.gain,
            pair: candidate.pair,
        });
    }

    fn remove(&mut self, pair: Pair) {
        if let Some(old) = self.entries.remove(&pair) {
            self.queue.remove(&Ranked {
                gain: old.gain,
                pair,
            });
        }
    }

    fn empty(round: u64, filter: CandidateFilter) -> Self {
        Self {
            queue: BTreeSet::new(),
            entries: HashMap::new(),
            intra: HashMap::new(),
            representatives: HashMap::new(),
            others: HashMap::new(),
            round,
            last_insertion: None,
            clustering_changed: true,
            last_recomputed: 0,
            filter,
        }
    }

    fn fill_block(
        &mut self,
        graph: &UncertainGraph,
        clustering: &Clustering,
        block: usize,
        params: &ReliabilityParams,
    ) {
        let members = clustering.block(block);
        for pair in self.intra.remove(&block).unwrap_or_default() {
            self.remove(pair);
        }
        let mut candidates = Vec::new();
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let pair = Pair::new(a, b).expect("distinct members");
                if !graph.contains(pair) && allowed(&self.filter, pair) {
                    candidates.push(pair);
                }
            }
        }
        if candidates.is_empty() {
            return;
        }
        let seed = block_seed(graph, members, params.seed);
        if let Some(limit) = params.intra_pair_sample {
            if candidates.len() > limit {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, candidates.len(), limit).into_vec();
                picked.sort_unstable();
                candidates = picked.into_iter().map(|i| candidates[i]).collect();
            }
        }
        let base = BlockGraph::extract(graph, members);
        let before = params.clamped_log(base.connectivity(params, seed).value);
        self.intra.insert(block, candidates.clone());
        for pair in candidates {
            let after = base.with_edge(graph, members, pair, 1.0).connectivity(params, seed);
            self.push(CandidatePriority {
                pair,
                gain: params.clamped_log(after.value) - before,
                scope: Scope::Intra { block },
            });
        }
    }

    fn fill_block_pair(
        &mut self,
        graph: &UncertainGraph,
        clustering: &Clustering,
        (j, k): (usize, usize),
        spanning_yes: Option<&[f64]>,
        params: &ReliabilityParams,
    ) {
        if let Some(old) = self.representatives.remove(&(j, k)) {
            self.remove(old);
        }
        self.others.remove(&(j, k));
        let mut absent: Vec<Pair> = clustering
            .block(j)
            .iter()
            .flat_map(|&a| clustering.block(k).iter().filter_map(move |&b| Pair::new(a, b)))
            .filter(|&pair| !graph.contains(pair) && allowed(&self.filter, pair))
            .collect();
        if absent.is_empty() {
            return;
        }
        absent.sort_unstable();
        let disconnect = match spanning_yes {
            Some(ps) => disconnect_from_yes(ps.iter().copied()),
            None => 0.0,
        };
        let representative = absent[0];
        self.push(CandidatePriority {
            pair: representative,
            gain: -params.clamped_log(disconnect),
            scope: Scope::Inter { block_j: j, block_k: k },
        });
        self.representatives.insert((j, k), representative);
        absent.remove(0);
        if !absent.is_empty() {
            self.others.insert((j, k), absent);
        }
    }
}

/// Priority of one absent pair.
pub fn pair_priority(
    graph: &UncertainGraph,
    clustering: &Clustering,
    pair: Pair,
    params: &ReliabilityParams,
) -> Result<f64> {
    params.validate()?;
    clustering.check_universe(graph)?;
    if pair.hi() >= graph.len() {
        return Err(Error::UnknownRecord(format!("#{}", pair.hi())));
    }
    if graph.contains(pair) {
        let (a, b) = graph.pair_ids(pair);
        return Err(Error::AlreadyCrowdsourced(a.to_string(), b.to_string()));
    }
    let (bj, bk) = (clustering.block_of(pair.lo()), clustering.block_of(pair.hi()));
    if bj == bk {
        let members = clustering.block(bj);
        let seed = block_seed(graph, members, params.seed);
        let base = BlockGraph::extract(graph, members);
        let before = base.connectivity(params, seed).value;
        let after = base.with_edge(graph, members, pair, 1.0).connectivity(params, seed).value;
        Ok(params.clamped_log(after) - params.clamped_log(before))
    } else {
        let spanning = clustering.block(bj).iter().flat_map(|&a| {
            clustering
                .block(bk)
                .iter()
                .filter_map(move |&b| Pair::new(a, b))
        });
        let disconnect = disconnect_from_yes(spanning.filter_map(|p| graph.probability(p)));
        // The hypothetical NO edge is certain, so Disconnect' = 1.
        Ok(params.clamped_log(1.0) - params.clamped_log(disconnect))
    }
}

/// Full queue for the current clustering.
pub fn build_state(
    graph: &UncertainGraph,
    clustering: &Clustering,
    params: &ReliabilityParams,
) -> Result<PriorityState> {
    build_state_filtered(graph, clustering, params, None)
}

/// [`build_state`] restricted to the pairs in `filter`.
pub fn build_state_filtered(
    graph: &UncertainGraph,
    clustering: &Clustering,
    params: &ReliabilityParams,
    filter: CandidateFilter,
) -> Result<PriorityState> {
    build_at(graph, clustering, params, filter, 0)
}

fn build_at(
    graph: &UncertainGraph,
    clustering: &Clustering,
    params: &ReliabilityParams,
    filter: CandidateFilter,
    round: u64,
) -> Result<PriorityState> {
    params.validate()?;
    clustering.check_universe(graph)?;
    let round_params = params.with_seed(round_seed(params.seed, round));
    let mut state = PriorityState::empty(round, filter);
    for block in 0..clustering.len() {
        state.fill_block(graph, clustering, block, &round_params);
    }
    let spanning = crate::reliability::spanning_by_block_pair(graph, clustering);
    let m = clustering.len();
    for j in 0..m {
        for k in j + 1..m {
            let ys = spanning.get(&(j, k)).map(Vec::as_slice);
            state.fill_block_pair(graph, clustering, (j, k), ys, &round_params);
        }
    }
    Ok(state)
}

/// Updates the queue after `answered` has been inserted into `graph`.
///
/// A changed clustering rebuilds everything. Otherwise only the entries of
/// the block or block pair containing `answered` are recomputed.
pub fn refresh_after_answer(
    state: PriorityState,
    graph: &UncertainGraph,
    clustering: &Clustering,
    answered: Pair,
    changed: bool,
    params: &ReliabilityParams,
) -> Result<PriorityState> {
    refresh_after_answers(state, graph, clustering, &[answered], changed, params)
}

/// Batch form of [`refresh_after_answer`]: all `answered` pairs are already
/// in `graph`; each touched block or block pair is recomputed once.
pub fn refresh_after_answers(
    mut state: PriorityState,
    graph: &UncertainGraph,
    clustering: &Clustering,
    answered: &[Pair],
    changed: bool,
    params: &ReliabilityParams,
) -> Result<PriorityState> {
    params.validate()?;
    clustering.check_universe(graph)?;
    for &pair in answered {
        if !graph.contains(pair) {
            let (a, b) = graph.pair_ids(pair);
            return Err(Error::NotAnEdge(a.to_string(), b.to_string()));
        }
    }
    let round = state.round + 1;
    let scope_of = |pair: Pair| {
        let (bj, bk) = (clustering.block_of(pair.lo()), clustering.block_of(pair.hi()));
        if bj == bk {
            Scope::Intra { block: bj }
        } else {
            Scope::Inter {
                block_j: bj.min(bk),
                block_k: bj.max(bk),
            }
        }
    };
    let last_insertion = answered.last().map(|&p| scope_of(p));
    if changed {
        let mut rebuilt = build_at(graph, clustering, params, state.filter.clone(), round)?;
        rebuilt.last_insertion = last_insertion;
        return Ok(rebuilt);
    }

    let round_params = params.with_seed(round_seed(params.seed, round));
    state.round = round;
    state.last_insertion = last_insertion;
    state.clustering_changed = false;
    state.last_recomputed = 0;
    let touched: BTreeSet<Scope> = answered.iter().map(|&p| scope_of(p)).collect();
    for scope in touched {
        match scope {
            Scope::Intra { block } => state.fill_block(graph, clustering, block, &round_params),
            Scope::Inter { block_j, block_k } => {
                let ys: Vec<f64> = clustering
                    .block(block_j)
                    .iter()
                    .flat_map(|&a| {
                        clustering
                            .block(block_k)
                            .iter()
                            .filter_map(move |&b| Pair::new(a, b))
                    })
                    .filter_map(|p| graph.probability(p))
                    .collect();
                let ys = (!ys.is_empty()).then_some(ys.as_slice());
                state.fill_block_pair(graph, clustering, (block_j, block_k), ys, &round_params);
            }
        }
    }
    Ok(state)
}

/// Highest-priority candidate; `None` once nothing is left to ask.
pub fn select_next(state: &PriorityState) -> Option<CandidatePriority> {
    state.ranked().next().copied()
}

/// Up to `k` distinct candidates.
///
/// Queue entries come first, best first. If the queue has fewer than `k`
/// entries, the remaining slots are filled with further absent pairs of the
/// chosen block pairs, which share their representative's gain.
pub fn select_batch(state: &PriorityState, k: usize) -> Vec<CandidatePriority> {
    let mut batch: Vec<CandidatePriority> = state.ranked().take(k).copied().collect();
    if batch.len() < k {
        let reps: Vec<CandidatePriority> = batch.clone();
        'fill: for rep in reps {
            if let Scope::Inter { block_j, block_k } = rep.scope {
                for &pair in state.others.get(&(block_j, block_k)).into_iter().flatten() {
                    if batch.len() == k {
                        break 'fill;
                    }
                    batch.push(CandidatePriority { pair, ..rep });
                }
            }
        }
    }
    batch
}
