//! Uncertain vote graphs, clusterings, and the clustering likelihood.
//!
//! Records are held in a sorted table and referred to by their position in
//! it, so index order and record-id order coincide. Every crowdsourced pair
//! is an edge carrying its raw [`VoteTally`] and the derived YES fraction.
//! A missing edge means the pair was never asked, which is different from an
//! edge whose probability is zero.
//!
//! All likelihoods are base-10 logarithms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hash::fnv1a;

/// Upper bound on the universe size accepted by [`enumerate_partitions`].
pub const MAX_ENUMERATION_RECORDS: usize = 12;

/// Opaque, non-empty record identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordId(String);

impl RecordId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::EmptyRecordId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub(crate) fn stable_hash(&self) -> u64 {
        fnv1a(self.0.as_bytes())
    }
}

impl FromStr for RecordId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::new(s)
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw crowd answers for one pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VoteTally {
    yes: u32,
    total: u32,
}

impl VoteTally {
    pub fn new(yes: u32, total: u32) -> Result<Self> {
        if total == 0 || yes > total {
            return Err(Error::InvalidTally { yes, total });
        }
        Ok(Self { yes, total })
    }

    pub fn yes(&self) -> u32 {
        self.yes
    }

    pub fn no(&self) -> u32 {
        self.total - self.yes
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// Fraction of YES votes.
    pub fn fraction(&self) -> f64 {
        f64::from(self.yes) / f64::from(self.total)
    }
}

/// Unordered pair of record indices, stored as `(lo, hi)` with `lo < hi`.
///
/// The derived ordering is lexicographic on `(lo, hi)`, which is the global
/// tie-break order for candidate pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    lo: usize,
    hi: usize,
}

impl Pair {
    /// Returns `None` for a self-pair.
    pub fn new(a: usize, b: usize) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(Self { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub tally: VoteTally,
    /// YES fraction, always `tally.yes / tally.total`.
    pub p: f64,
}

/// Records plus crowdsourced pairs.
#[derive(Clone, Debug)]
pub struct UncertainGraph {
    records: Vec<RecordId>,
    index: HashMap<RecordId, usize>,
    edges: BTreeMap<Pair, Edge>,
}

impl UncertainGraph {
    /// Graph with the given records and no edges. Records are sorted; a
    /// repeated id is rejected.
    pub fn new(records: impl IntoIterator<Item = RecordId>) -> Result<Self> {
        let mut records: Vec<RecordId> = records.into_iter().collect();
        records.sort();
        if let Some(w) = records.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateRecord(w[0].to_string()));
        }
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        Ok(Self {
            records,
            index,
            edges: BTreeMap::new(),
        })
    }

    /// Builds a graph from declared records and crowdsourced pairs.
    pub fn ingest_votes(
        records: impl IntoIterator<Item = RecordId>,
        votes: impl IntoIterator<Item = (RecordId, RecordId, VoteTally)>,
    ) -> Result<Self> {
        let mut graph = Self::new(records)?;
        for (a, b, tally) in votes {
            let pair = graph.pair(&a, &b)?;
            graph.insert(pair, tally)?;
        }
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RecordId] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &RecordId {
        &self.records[index]
    }

    pub fn index_of(&self, id: &RecordId) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Canonical pair for two declared ids.
    pub fn pair(&self, a: &RecordId, b: &RecordId) -> Result<Pair> {
        let ia = self
            .index_of(a)
            .ok_or_else(|| Error::UnknownRecord(a.to_string()))?;
        let ib = self
            .index_of(b)
            .ok_or_else(|| Error::UnknownRecord(b.to_string()))?;
        Pair::new(ia, ib).ok_or_else(|| Error::SelfLoop(a.to_string()))
    }

    pub fn pair_ids(&self, pair: Pair) -> (&RecordId, &RecordId) {
        (&self.records[pair.lo], &self.records[pair.hi])
    }

    /// Adds a newly crowdsourced pair. A pair can be inserted only once.
    pub fn insert(&mut self, pair: Pair, tally: VoteTally) -> Result<()> {
        if pair.hi >= self.records.len() {
            return Err(Error::UnknownRecord(format!("#{}", pair.hi)));
        }
        if self.edges.contains_key(&pair) {
            let (a, b) = self.pair_ids(pair);
            return Err(Error::DuplicatePair(a.to_string(), b.to_string()));
        }
        self.edges.insert(
            pair,
            Edge {
                tally,
                p: tally.fraction(),
            },
        );
        Ok(())
    }

    pub fn edge(&self, pair: Pair) -> Option<&Edge> {
        self.edges.get(&pair)
    }

    pub fn probability(&self, pair: Pair) -> Option<f64> {
        self.edges.get(&pair).map(|e| e.p)
    }

    pub fn contains(&self, pair: Pair) -> bool {
        self.edges.contains_key(&pair)
    }

    /// Edges in pair order.
    pub fn edges(&self) -> impl Iterator<Item = (Pair, &Edge)> + '_ {
        self.edges.iter().map(|(p, e)| (*p, e))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// True once every record pair has been crowdsourced.
    pub fn is_complete(&self) -> bool {
        let n = self.records.len();
        self.edges.len() == n * n.saturating_sub(1) / 2
    }

    pub(crate) fn pair_hash(&self, pair: Pair) -> u64 {
        id_pair_hash(&self.records[pair.lo], &self.records[pair.hi])
    }
}

/// Order-independent hash of two record ids; agrees with
/// [`UncertainGraph::pair_hash`] on any graph holding both.
pub(crate) fn id_pair_hash(a: &RecordId, b: &RecordId) -> u64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    crate::hash::combine(lo.stable_hash(), hi.stable_hash())
}

/// A partition of the record indices `0..n` into blocks.
///
/// Canonical form: members sorted within each block, blocks sorted by their
/// minimum member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clustering {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Clustering {
    /// Validates that `blocks` partitions `0..n` and canonicalizes it.
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::NotAPartition("empty block".into()));
            }
            block.sort_unstable();
            for &r in block.iter() {
                if r >= n {
                    return Err(Error::NotAPartition(format!("record #{r} outside universe of {n}")));
                }
                if std::mem::replace(&mut seen[r], true) {
                    return Err(Error::NotAPartition(format!("record #{r} in two blocks")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::NotAPartition(format!("record #{missing} not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        let mut block_of = vec![0; n];
        for (i, block) in blocks.iter().enumerate() {
            for &r in block {
                block_of[r] = i;
            }
        }
        Ok(Self { blocks, block_of })
    }

    /// Clustering from a per-record label vector; equal labels share a block.
    pub fn from_labels<L: Ord>(labels: &[L]) -> Self {
        let mut groups: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(l).or_default().push(i);
        }
        Self::new(labels.len(), groups.into_values().collect())
            .expect("labels always partition their index range")
    }

    pub fn singletons(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| vec![i]).collect()).expect("singletons partition")
    }

    /// Builds a clustering of `graph`'s records from blocks of ids.
    pub fn from_ids(graph: &UncertainGraph, blocks: &[Vec<RecordId>]) -> Result<Self> {
        let blocks = blocks
            .iter()
            .map(|b| {
                b.iter()
                    .map(|id| {
                        graph
                            .index_of(id)
                            .ok_or_else(|| Error::UnknownRecord(id.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(graph.len(), blocks)
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    pub fn block_of(&self, record: usize) -> usize {
        self.block_of[record]
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.block_of[a] == self.block_of[b]
    }

    /// Number of blocks.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_records(&self) -> usize {
        self.block_of.len()
    }

    pub(crate) fn check_universe(&self, graph: &UncertainGraph) -> Result<()> {
        if self.n_records() != graph.len() {
            return Err(Error::NotAPartition(format!(
                "clustering covers {} records, graph has {}",
                self.n_records(),
                graph.len()
            )));
        }
        Ok(())
    }
}

/// Log-probability of the possible world in which exactly `present` edges
/// exist. Impossible worlds give `f64::NEG_INFINITY`.
pub fn possible_world_log_prob(graph: &UncertainGraph, present: &BTreeSet<Pair>) -> Result<f64> {
    if let Some(&stray) = present.iter().find(|p| !graph.contains(**p)) {
        let (a, b) = stray_ids(graph, stray);
        return Err(Error::NotAnEdge(a, b));
    }
    Ok(graph
        .edges()
        .map(|(pair, e)| {
            if present.contains(&pair) {
                e.p.log10()
            } else {
                (1.0 - e.p).log10()
            }
        })
        .sum())
}

fn stray_ids(graph: &UncertainGraph, pair: Pair) -> (String, String) {
    let name = |i: usize| {
        graph
            .records
            .get(i)
            .map_or_else(|| format!("#{i}"), ToString::to_string)
    };
    (name(pair.lo), name(pair.hi))
}

/// Log-likelihood of a clustering: every intra-block edge exists and every
/// inter-block edge does not.
pub fn clustering_log_likelihood(graph: &UncertainGraph, clustering: &Clustering) -> Result<f64> {
    clustering.check_universe(graph)?;
    Ok(graph
        .edges()
        .map(|(pair, e)| {
            if clustering.same_block(pair.lo, pair.hi) {
                e.p.log10()
            } else {
                (1.0 - e.p).log10()
            }
        })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Label {
    Yes,
    No,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YesNoEdge {
    pub label: Label,
    /// Existence probability: `p` for YES edges, `1 - p` for NO edges.
    pub p: f64,
}

/// Edge labels and existence probabilities relative to a clustering.
#[derive(Clone, Debug, PartialEq)]
pub struct YesNoView {
    edges: BTreeMap<Pair, YesNoEdge>,
}

impl YesNoView {
    pub fn get(&self, pair: Pair) -> Option<&YesNoEdge> {
        self.edges.get(&pair)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pair, &YesNoEdge)> + '_ {
        self.edges.iter().map(|(p, e)| (*p, e))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Existence probability of an edge with YES fraction `p` under the given
/// role: `p` if intra-block, `1 - p` otherwise.
pub fn yes_no_probability(p: f64, intra: bool) -> f64 {
    if intra {
        p
    } else {
        1.0 - p
    }
}

pub fn derive_yes_no(graph: &UncertainGraph, clustering: &Clustering) -> Result<YesNoView> {
    clustering.check_universe(graph)?;
    let edges = graph
        .edges()
        .map(|(pair, e)| {
            let intra = clustering.same_block(pair.lo, pair.hi);
            let label = if intra { Label::Yes } else { Label::No };
            (
                pair,
                YesNoEdge {
                    label,
                    p: yes_no_probability(e.p, intra),
                },
            )
        })
        .collect();
    Ok(YesNoView { edges })
}

/// Every set partition of `0..n`, each exactly once, in canonical form.
///
/// Partitions are generated as restricted growth strings in lexicographic
/// order, so the all-in-one-block partition comes first.
pub fn enumerate_partitions(n: usize) -> Result<Partitions> {
    if n > MAX_ENUMERATION_RECORDS {
        return Err(Error::TooManyRecords {
            what: "partition enumeration",
            limit: MAX_ENUMERATION_RECORDS,
            got: n,
        });
    }
    Ok(Partitions {
        labels: vec![0; n],
        maxima: vec![0; n],
        done: false,
    })
}

/// Iterator over set partitions; see [`enumerate_partitions`].
#[derive(Debug)]
pub struct Partitions {
    // Restricted growth string: labels[0] = 0, labels[i] <= 1 + max(labels[..i]).
    labels: Vec<usize>,
    // maxima[i] = max(labels[..=i])
    maxima: Vec<usize>,
    done: bool,
}

impl Iterator for Partitions {
    type Item = Clustering;

    fn next(&mut self) -> Option<Clustering> {
        if self.done {
            return None;
        }
        let current = Clustering::from_labels(&self.labels);
        // Advance: find the rightmost position that can be incremented.
        let n = self.labels.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.labels[i] <= self.maxima[i - 1] {
                self.labels[i] += 1;
                self.maxima[i] = self.maxima[i - 1].max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.maxima[j] = self.maxima[i];
                }
                break;
            }
        }
        Some(current)
    }
}
