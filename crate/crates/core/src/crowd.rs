//! Sources of crowd answers and crowd-error accounting.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{id_pair_hash, Clustering, RecordId, UncertainGraph, VoteTally};
use crate::hash::combine;

/// Ground-truth entity of every record, with an optional per-record
/// difficulty multiplier on the crowd error rate (default 1).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GoldClustering {
    entity: BTreeMap<RecordId, String>,
    difficulty: HashMap<RecordId, f64>,
}

impl GoldClustering {
    pub fn new(rows: impl IntoIterator<Item = (RecordId, String, Option<f64>)>) -> Result<Self> {
        let mut gold = Self::default();
        for (id, entity, difficulty) in rows {
            if let Some(d) = difficulty {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "difficulty of `{id}` must be a non-negative number, got {d}"
                    )));
                }
                if d != 1.0 {
                    gold.difficulty.insert(id.clone(), d);
                }
            }
            if gold.entity.insert(id.clone(), entity).is_some() {
                return Err(Error::DuplicateRecord(id.to_string()));
            }
        }
        Ok(gold)
    }

    /// Gold with the given entity label per record and no difficulties.
    pub fn from_labels<S: Into<String>>(rows: impl IntoIterator<Item = (RecordId, S)>) -> Result<Self> {
        Self::new(rows.into_iter().map(|(id, e)| (id, e.into(), None)))
    }

    pub fn len(&self) -> usize {
        self.entity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entity.is_empty()
    }

    /// Records in id order.
    pub fn records(&self) -> impl Iterator<Item = &RecordId> + '_ {
        self.entity.keys()
    }

    pub fn entity(&self, id: &RecordId) -> Option<&str> {
        self.entity.get(id).map(String::as_str)
    }

    pub fn difficulty(&self, id: &RecordId) -> f64 {
        self.difficulty.get(id).copied().unwrap_or(1.0)
    }

    /// Difficulty of a pair: the mean of its two records' difficulties.
    pub fn pair_difficulty(&self, a: &RecordId, b: &RecordId) -> f64 {
        0.5 * (self.difficulty(a) + self.difficulty(b))
    }

    pub fn same_entity(&self, a: &RecordId, b: &RecordId) -> Result<bool> {
        let ea = self.entity(a).ok_or_else(|| Error::UnknownRecord(a.to_string()))?;
        let eb = self.entity(b).ok_or_else(|| Error::UnknownRecord(b.to_string()))?;
        Ok(ea == eb)
    }

    /// The gold partition over `graph`'s records; both must hold exactly the
    /// same record ids.
    pub fn to_clustering(&self, graph: &UncertainGraph) -> Result<Clustering> {
        if graph.len() != self.len() {
            return Err(Error::UniverseMismatch(format!(
                "graph has {} records, gold has {}",
                graph.len(),
                self.len()
            )));
        }
        let labels = graph
            .records()
            .iter()
            .map(|id| {
                self.entity(id)
                    .ok_or_else(|| Error::UniverseMismatch(format!("`{id}` missing from gold")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Clustering::from_labels(&labels))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorkerModel {
    pub workers_per_pair: u32,
    pub error_rate: f64,
}

impl Default for WorkerModel {
    fn default() -> Self {
        Self {
            workers_per_pair: 5,
            error_rate: 0.1,
        }
    }
}

impl WorkerModel {
    pub fn validate(&self) -> Result<()> {
        if self.workers_per_pair == 0 {
            return Err(Error::InvalidParams("workers per pair must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::InvalidParams(format!(
                "error rate must lie in [0, 1], got {}",
                self.error_rate
            )));
        }
        Ok(())
    }
}

/// Asks `model.workers_per_pair` independent workers whether `a` and `b`
/// match. Each one reports the truth flipped with probability
/// `error_rate * difficulty`, capped at 1.
pub fn simulate_votes<R: Rng + ?Sized>(
    gold: &GoldClustering,
    a: &RecordId,
    b: &RecordId,
    model: &WorkerModel,
    rng: &mut R,
) -> Result<VoteTally> {
    model.validate()?;
    let truth = gold.same_entity(a, b)?;
    let flip = (model.error_rate * gold.pair_difficulty(a, b)).min(1.0);
    let yes = (0..model.workers_per_pair)
        .filter(|_| rng.gen_bool(flip) != truth)
        .count() as u32;
    VoteTally::new(yes, model.workers_per_pair)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Simulated,
    Replay,
    Interactive,
}

/// Anything that can answer "do these two records match?" with a tally.
pub trait Oracle {
    fn answer(&mut self, a: &RecordId, b: &RecordId) -> Result<VoteTally>;
    fn kind(&self) -> OracleKind;

    /// The only pairs this oracle can answer, or `None` if it answers any.
    fn answerable(&self) -> Option<Vec<(RecordId, RecordId)>> {
        None
    }
}

/// Noisy crowd driven by gold labels.
///
/// Each pair's votes come from a generator seeded by the master seed and the
/// pair itself, so a pair gets the same tally whenever and in whichever
/// order it is asked.
#[derive(Clone, Debug)]
pub struct SimulatedOracle {
    gold: GoldClustering,
    model: WorkerModel,
    seed: u64,
}

impl SimulatedOracle {
    pub fn new(gold: GoldClustering, model: WorkerModel, seed: u64) -> Result<Self> {
        model.validate()?;
        Ok(Self { gold, model, seed })
    }

    pub fn gold(&self) -> &GoldClustering {
        &self.gold
    }
}

impl Oracle for SimulatedOracle {
    fn answer(&mut self, a: &RecordId, b: &RecordId) -> Result<VoteTally> {
        let mut rng = ChaCha8Rng::seed_from_u64(combine(self.seed, id_pair_hash(a, b)));
        simulate_votes(&self.gold, a, b, &self.model, &mut rng)
    }

    fn kind(&self) -> OracleKind {
        OracleKind::Simulated
    }
}

/// Answers from a recorded vote log.
#[derive(Clone, Debug, Default)]
pub struct ReplayOracle {
    log: HashMap<(RecordId, RecordId), VoteTally>,
}

fn ordered(a: &RecordId, b: &RecordId) -> (RecordId, RecordId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

impl ReplayOracle {
    pub fn new(votes: impl IntoIterator<Item = (RecordId, RecordId, VoteTally)>) -> Result<Self> {
        let mut log = HashMap::new();
        for (a, b, tally) in votes {
            if a == b {
                return Err(Error::SelfLoop(a.to_string()));
            }
            if log.insert(ordered(&a, &b), tally).is_some() {
                return Err(Error::DuplicatePair(a.to_string(), b.to_string()));
            }
        }
        Ok(Self { log })
    }

    pub fn contains(&self, a: &RecordId, b: &RecordId) -> bool {
        self.log.contains_key(&ordered(a, b))
    }

    /// Logged pairs, each with the smaller id first.
    pub fn pairs(&self) -> impl Iterator<Item = (&RecordId, &RecordId)> + '_ {
        self.log.keys().map(|(a, b)| (a, b))
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }
}

impl Oracle for ReplayOracle {
    fn answer(&mut self, a: &RecordId, b: &RecordId) -> Result<VoteTally> {
        self.log
            .get(&ordered(a, b))
            .copied()
            .ok_or_else(|| Error::NotInLog(a.to_string(), b.to_string()))
    }

    fn kind(&self) -> OracleKind {
        OracleKind::Replay
    }

    fn answerable(&self) -> Option<Vec<(RecordId, RecordId)>> {
        Some(self.log.keys().cloned().collect())
    }
}

/// Asks a person on a line-oriented terminal, once per simulated worker.
///
/// Prompt: `PAIR <a> <b>? [y/n] (i of w)`; accepts `y` or `n`, re-prompts on
/// anything else.
pub struct InteractiveOracle<R, W> {
    input: R,
    output: W,
    workers: u32,
}

impl<R: BufRead, W: Write> InteractiveOracle<R, W> {
    pub fn new(input: R, output: W, workers: u32) -> Result<Self> {
        if workers == 0 {
            return Err(Error::InvalidParams("workers per pair must be at least 1".into()));
        }
        Ok(Self {
            input,
            output,
            workers,
        })
    }
}

impl<R: BufRead, W: Write> Oracle for InteractiveOracle<R, W> {
    fn answer(&mut self, a: &RecordId, b: &RecordId) -> Result<VoteTally> {
        let mut yes = 0;
        for i in 1..=self.workers {
            loop {
                writeln!(self.output, "PAIR {a} {b}? [y/n] ({i} of {})", self.workers)?;
                self.output.flush()?;
                let mut line = String::new();
                if self.input.read_line(&mut line)? == 0 {
                    return Err(Error::Interactive("input closed before an answer".into()));
                }
                match line.trim() {
                    "y" | "Y" => {
                        yes += 1;
                        break;
                    }
                    "n" | "N" => break,
                    _ => {}
                }
            }
        }
        VoteTally::new(yes, self.workers)
    }

    fn kind(&self) -> OracleKind {
        OracleKind::Interactive
    }
}

/// Mean over asked pairs of the fraction of workers contradicting gold, as a
/// percentage.
pub fn crowd_error_rate(asked: &[(RecordId, RecordId, VoteTally)], gold: &GoldClustering) -> Result<f64> {
    if asked.is_empty() {
        return Err(Error::NoAnswers);
    }
    let mut sum = 0.0;
    for (a, b, tally) in asked {
        let wrong = if gold.same_entity(a, b)? { tally.no() } else { tally.yes() };
        sum += f64::from(wrong) / f64::from(tally.total());
    }
    Ok(100.0 * sum / asked.len() as f64)
}
