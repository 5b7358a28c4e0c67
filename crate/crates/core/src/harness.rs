//! The end-to-end question loop, pairwise metrics, and run artifacts.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{dense_batch, tc_batch};
use crate::cluster::{mlc_unchanged, scc_cluster};
use crate::crowd::{GoldClustering, Oracle, WorkerModel};
use crate::error::{Error, Result};
use crate::graph::{Clustering, Pair, RecordId, UncertainGraph};
use crate::hash::combine;
use crate::io::{self, VoteRow};
use crate::next::{allowed, build_state_filtered, refresh_after_answers, select_batch, CandidateFilter};
use crate::reliability::{reliability, ReliabilityParams};

const INITIAL_STREAM: u64 = 0x1417;
const TC_STREAM: u64 = 0x7c;

/// Above this many record pairs the initial random pairs are drawn by
/// rejection instead of shuffling the full pair list.
const FULL_SHUFFLE_PAIRS: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Perc,
    Tc,
    Dense,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perc" => Ok(Strategy::Perc),
            "tc" => Ok(Strategy::Tc),
            "dense" => Ok(Strategy::Dense),
            other => Err(Error::InvalidParams(format!(
                "unknown strategy `{other}` (expected perc, tc or dense)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Perc => "perc",
            Strategy::Tc => "tc",
            Strategy::Dense => "dense",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    /// Distinct pairs that may be crowdsourced, initial pairs included.
    pub budget: usize,
    pub batch_size: usize,
    pub initial_pairs: usize,
    pub workers: WorkerModel,
    /// Sampling parameters; the seed is replaced by [`Self::seed`].
    pub reliability: ReliabilityParams,
    pub seed: u64,
    /// Rounds between metric snapshots.
    pub eval_every: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Perc,
            budget: 1000,
            batch_size: 10,
            initial_pairs: 0,
            workers: WorkerModel::default(),
            reliability: ReliabilityParams::default(),
            seed: 0,
            eval_every: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParams("batch size must be at least 1".into()));
        }
        if self.batch_size > self.budget {
            return Err(Error::InvalidParams(format!(
                "batch size {} exceeds budget {}",
                self.batch_size, self.budget
            )));
        }
        if self.initial_pairs > self.budget {
            return Err(Error::InvalidParams(format!(
                "{} initial pairs exceed budget {}",
                self.initial_pairs, self.budget
            )));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidParams("eval_every must be at least 1".into()));
        }
        self.workers.validate()?;
        self.reliability.validate()
    }

    fn params(&self) -> ReliabilityParams {
        ReliabilityParams {
            seed: self.seed,
            ..self.reliability.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Pairwise precision, recall and F1 of `predicted` against `truth`.
///
/// Precision is zero when nothing is predicted to match, recall is zero
/// when nothing truly matches.
pub fn pair_metrics(predicted: &Clustering, truth: &Clustering) -> Result<PairMetrics> {
    if predicted.n_records() != truth.n_records() {
        return Err(Error::UniverseMismatch(format!(
            "{} predicted records, {} gold records",
            predicted.n_records(),
            truth.n_records()
        )));
    }
    let pairs = |k: usize| (k * k.saturating_sub(1) / 2) as f64;
    let predicted_pairs: f64 = predicted.blocks().iter().map(|b| pairs(b.len())).sum();
    let truth_pairs: f64 = truth.blocks().iter().map(|b| pairs(b.len())).sum();
    let mut hits = 0.0;
    for block in predicted.blocks() {
        let mut cells = std::collections::HashMap::<usize, usize>::new();
        for &r in block {
            *cells.entry(truth.block_of(r)).or_default() += 1;
        }
        hits += cells.values().map(|&c| pairs(c)).sum::<f64>();
    }
    let precision = if predicted_pairs > 0.0 { hits / predicted_pairs } else { 0.0 };
    let recall = if truth_pairs > 0.0 { hits / truth_pairs } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(PairMetrics {
        precision,
        recall,
        f1,
    })
}

/// Pairwise metrics of a clustering of `graph`'s records against gold.
pub fn precision_recall_f1(
    graph: &UncertainGraph,
    predicted: &Clustering,
    gold: &GoldClustering,
) -> Result<PairMetrics> {
    predicted.check_universe(graph)?;
    pair_metrics(predicted, &gold.to_clustering(graph)?)
}

/// Quality of the clustering after a number of questions. Pairwise metrics
/// are absent when no gold labels are known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsSnapshot {
    pub questions_asked: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub reliability: f64,
    pub blocks: usize,
}

impl fmt::Display for MetricsSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        write!(
            f,
            "questions={} precision={} recall={} f1={} reliability={:.4} blocks={}",
            self.questions_asked,
            m(self.precision),
            m(self.recall),
            m(self.f1),
            self.reliability,
            self.blocks
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    GraphComplete,
    /// The strategy had nothing left to propose.
    NoCandidates,
    /// Every pair the replay log can answer was asked, or the log could not
    /// answer a proposed pair.
    OracleExhausted,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub curve: Vec<MetricsSnapshot>,
    pub graph: UncertainGraph,
    pub clustering: Clustering,
    /// Every answer in the order it was received.
    pub votes: Vec<VoteRow>,
    pub stop: StopReason,
    /// Answers checked against the clustering after the initial phase.
    pub answers_checked: usize,
    /// Of those, answers that disagreed with the clustering.
    pub answers_failed: usize,
    /// Rounds that re-ran the clustering.
    pub reclusters: usize,
}

impl RunOutcome {
    pub fn stopped_early(&self) -> bool {
        self.stop == StopReason::OracleExhausted
    }

    /// Fraction of checked answers that forced a re-clustering.
    pub fn recluster_fraction(&self) -> f64 {
        if self.answers_checked == 0 {
            0.0
        } else {
            self.answers_failed as f64 / self.answers_checked as f64
        }
    }

    pub fn final_snapshot(&self) -> Option<&MetricsSnapshot> {
        self.curve.last()
    }
}

/// Random spanning tree over a random permutation of the records, then all
/// remaining pairs in random order. Returns the first `count` allowed pairs
/// not yet in `graph`.
fn initial_pairs<R: Rng>(graph: &UncertainGraph, count: usize, rng: &mut R, filter: &CandidateFilter) -> Vec<Pair> {
    let n = graph.len();
    let mut out = Vec::with_capacity(count);
    if count == 0 || n < 2 {
        return out;
    }
    let mut seen = HashSet::new();
    let mut offer = |pair: Pair, out: &mut Vec<Pair>| {
        if seen.insert(pair) && allowed(filter, pair) && !graph.contains(pair) {
            out.push(pair);
        }
        out.len() >= count
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        if offer(Pair::new(order[i], order[j]).expect("distinct"), &mut out) {
            return out;
        }
    }
    let total = n * (n - 1) / 2;
    if total <= FULL_SHUFFLE_PAIRS {
        let mut all: Vec<Pair> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| Pair::new(a, b).expect("a < b")))
            .collect();
        all.shuffle(rng);
        for pair in all {
            if offer(pair, &mut out) {
                break;
            }
        }
    } else {
        let attempts = 64 * count + n;
        for _ in 0..attempts {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if let Some(pair) = Pair::new(a, b) {
                if offer(pair, &mut out) {
                    break;
                }
            }
        }
    }
    out
}

/// Restriction of candidates to the pairs an oracle can answer, if any.
fn oracle_filter(graph: &UncertainGraph, oracle: &dyn Oracle) -> Result<CandidateFilter> {
    let Some(pairs) = oracle.answerable() else {
        return Ok(None);
    };
    let set = pairs
        .into_iter()
        .map(|(a, b)| graph.pair(&a, &b))
        .collect::<Result<HashSet<Pair>>>()?;
    Ok(Some(Arc::new(set)))
}

struct Loop<'a> {
    config: &'a ExperimentConfig,
    params: ReliabilityParams,
    graph: UncertainGraph,
    oracle: &'a mut dyn Oracle,
    gold: Option<Clustering>,
    votes: Vec<VoteRow>,
    curve: Vec<MetricsSnapshot>,
}

impl Loop<'_> {
    /// Asks one pair and records the answer; `Ok(None)` when the oracle's
    /// log has no answer for it.
    fn ask(&mut self, pair: Pair) -> Result<Option<f64>> {
        let (a, b) = self.graph.pair_ids(pair);
        let (a, b) = (a.clone(), b.clone());
        let tally = match self.oracle.answer(&a, &b) {
            Ok(t) => t,
            Err(Error::NotInLog(..)) => return Ok(None),
            Err(e) => return Err(e),
        };
        self.graph.insert(pair, tally)?;
        self.votes.push((a, b, tally));
        Ok(Some(tally.fraction()))
    }

    fn snapshot(&mut self, clustering: &Clustering) -> Result<()> {
        let asked = self.votes.len();
        if self.curve.last().is_some_and(|s| s.questions_asked == asked) {
            return Ok(());
        }
        let metrics = match &self.gold {
            Some(truth) => Some(pair_metrics(clustering, truth)?),
            None => None,
        };
        self.curve.push(MetricsSnapshot {
            questions_asked: asked,
            precision: metrics.map(|m| m.precision),
            recall: metrics.map(|m| m.recall),
            f1: metrics.map(|m| m.f1),
            reliability: reliability(&self.graph, clustering, &self.params)?.value,
            blocks: clustering.len(),
        });
        Ok(())
    }
}

/// Runs the question loop until the budget is spent, every pair has been
/// asked, or the strategy runs out of candidates.
///
/// An oracle that can only answer some pairs (a replay log) restricts every
/// strategy to those pairs. `gold`, when given, is used for metrics only.
pub fn run_experiment(
    config: &ExperimentConfig,
    records: Vec<RecordId>,
    oracle: &mut dyn Oracle,
    gold: Option<&GoldClustering>,
) -> Result<RunOutcome> {
    run_experiment_on(config, UncertainGraph::new(records)?, oracle, gold)
}

/// [`run_experiment`] starting from a graph that may already hold answers.
/// Those answers are not part of the budget, the question count, or the
/// returned vote log.
pub fn run_experiment_on(
    config: &ExperimentConfig,
    graph: UncertainGraph,
    oracle: &mut dyn Oracle,
    gold: Option<&GoldClustering>,
) -> Result<RunOutcome> {
    config.validate()?;
    let truth = gold.map(|g| g.to_clustering(&graph)).transpose()?;
    let filter = oracle_filter(&graph, oracle)?;
    let params = config.params();
    let mut run = Loop {
        config,
        params: params.clone(),
        graph,
        oracle,
        gold: truth,
        votes: Vec::new(),
        curve: Vec::new(),
    };

    let mut init_rng = ChaCha8Rng::seed_from_u64(combine(config.seed, INITIAL_STREAM));
    let mut tc_rng = ChaCha8Rng::seed_from_u64(combine(config.seed, TC_STREAM));
    let mut stop = None;
    for pair in initial_pairs(&run.graph, config.initial_pairs, &mut init_rng, &filter) {
        if run.ask(pair)?.is_none() {
            stop = Some(StopReason::OracleExhausted);
            break;
        }
    }
    let mut clustering = scc_cluster(&run.graph);
    run.snapshot(&clustering)?;
    let mut state = match config.strategy {
        Strategy::Perc => Some(build_state_filtered(&run.graph, &clustering, &params, filter.clone())?),
        _ => None,
    };

    let (mut answers_checked, mut answers_failed, mut reclusters) = (0, 0, 0);
    let mut round = 0;
    while stop.is_none() {
        let remaining = run.config.budget.saturating_sub(run.votes.len());
        if remaining == 0 {
            stop = Some(StopReason::Budget);
            break;
        }
        if run.graph.is_complete() {
            stop = Some(StopReason::GraphComplete);
            break;
        }
        let k = run.config.batch_size.min(remaining);
        let batch: Vec<Pair> = match run.config.strategy {
            Strategy::Perc => select_batch(state.as_ref().expect("perc state"), k)
                .into_iter()
                .map(|c| c.pair)
                .collect(),
            Strategy::Tc => tc_batch(&run.graph, &mut tc_rng, k, &filter),
            Strategy::Dense => dense_batch(&run.graph, &clustering, k, &filter),
        };
        if batch.is_empty() {
            stop = Some(if filter.is_some() {
                StopReason::OracleExhausted
            } else {
                StopReason::NoCandidates
            });
            break;
        }
        round += 1;

        let mut answered = Vec::with_capacity(batch.len());
        let mut consistent = true;
        for pair in batch {
            let Some(p) = run.ask(pair)? else {
                stop = Some(StopReason::OracleExhausted);
                break;
            };
            answered.push(pair);
            answers_checked += 1;
            if !mlc_unchanged(&clustering, pair, p) {
                answers_failed += 1;
                consistent = false;
            }
        }
        let mut changed = false;
        if !consistent {
            reclusters += 1;
            let next = scc_cluster(&run.graph);
            changed = next != clustering;
            clustering = next;
        }
        if let Some(s) = state.take() {
            state = Some(refresh_after_answers(s, &run.graph, &clustering, &answered, changed, &params)?);
        }
        if round % run.config.eval_every == 0 {
            run.snapshot(&clustering)?;
        }
    }
    run.snapshot(&clustering)?;

    Ok(RunOutcome {
        curve: run.curve,
        graph: run.graph,
        clustering,
        votes: run.votes,
        stop: stop.expect("loop exits with a reason"),
        answers_checked,
        answers_failed,
        reclusters,
    })
}

/// Writes `curve.csv`, `clusters.csv` and `votes.csv` into `dir`, creating
/// it if needed.
pub fn report(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    if outcome.curve.is_empty() {
        return Err(Error::InvalidParams("nothing to report: empty curve".into()));
    }
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    io::write_curve(&dir.join("curve.csv"), &outcome.curve)?;
    io::write_clusters(&dir.join("clusters.csv"), &outcome.graph, &outcome.clustering)?;
    io::write_votes(&dir.join("votes.csv"), &outcome.votes)
}

/// Synthetic world: `records` records spread as evenly as possible over
/// `entities` entities, assigned at random.
pub fn synth_world(entities: usize, records: usize, seed: u64) -> Result<(Vec<RecordId>, GoldClustering)> {
    if entities == 0 || records < entities {
        return Err(Error::InvalidParams(format!(
            "need at least one entity and no fewer records than entities, got {entities} entities and {records} records"
        )));
    }
    let width = |n: usize| n.saturating_sub(1).to_string().len();
    let (rw, ew) = (width(records).max(3), width(entities).max(2));
    let mut labels: Vec<usize> = (0..records).map(|i| i % entities).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let ids: Vec<RecordId> = (0..records)
        .map(|i| RecordId::new(format!("r{i:0rw$}")))
        .collect::<Result<_>>()?;
    let gold = GoldClustering::from_labels(
        ids.iter()
            .cloned()
            .zip(labels.iter().map(|e| format!("e{e:0ew$}"))),
    )?;
    Ok((ids, gold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crowd::SimulatedOracle;

    #[test]
    fn metrics_examples() {
        let gold = Clustering::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let perfect = pair_metrics(&gold, &gold).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        let predicted = Clustering::new(4, vec![vec![0, 1, 2], vec![3]]).unwrap();
        let m = pair_metrics(&predicted, &gold).unwrap();
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - 0.4).abs() < 1e-12);

        let m = pair_metrics(&Clustering::singletons(4), &gold).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));

        assert!(pair_metrics(&Clustering::singletons(3), &gold).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = ExperimentConfig::default();
        ok.validate().unwrap();
        let bad = ExperimentConfig {
            batch_size: 2000,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            initial_pairs: 1001,
            ..ok.clone()
        };
        assert!(bad.validate().is_err());
        assert_eq!("dense".parse::<Strategy>().unwrap(), Strategy::Dense);
        assert!("mmx".parse::<Strategy>().is_err());
    }

    #[test]
    fn synth_world_is_balanced() {
        let (ids, gold) = synth_world(4, 10, 3).unwrap();
        assert_eq!(ids.len(), 10);
        assert_eq!(ids[0].as_str(), "r000");
        let g = UncertainGraph::new(ids).unwrap();
        let mut sizes: Vec<usize> = gold.to_clustering(&g).unwrap().blocks().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 3, 3]);
        assert!(synth_world(5, 4, 0).is_err());
    }

    #[test]
    fn initial_stream_starts_with_spanning_tree() {
        let empty = UncertainGraph::new((0..8).map(|i| RecordId::new(format!("r{i}")).unwrap())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs = initial_pairs(&empty, 7, &mut rng, &None);
        let g = UncertainGraph::ingest_votes(
            (0..8).map(|i| RecordId::new(format!("r{i}")).unwrap()),
            pairs.iter().map(|p| {
                (
                    RecordId::new(format!("r{}", p.lo())).unwrap(),
                    RecordId::new(format!("r{}", p.hi())).unwrap(),
                    crate::graph::VoteTally::new(1, 1).unwrap(),
                )
            }),
        )
        .unwrap();
        assert_eq!(scc_cluster(&g).len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(initial_pairs(&empty, 28, &mut rng, &None).len(), 28);
    }

    #[test]
    fn noiseless_crowd_converges() {
        let (ids, gold) = synth_world(3, 9, 1).unwrap();
        let model = WorkerModel {
            workers_per_pair: 3,
            error_rate: 0.0,
        };
        for strategy in [Strategy::Perc, Strategy::Tc, Strategy::Dense] {
            let config = ExperimentConfig {
                strategy,
                budget: 36,
                batch_size: 2,
                initial_pairs: 4,
                workers: model,
                ..Default::default()
            };
            let mut oracle = SimulatedOracle::new(gold.clone(), model, 5).unwrap();
            let out = run_experiment(&config, ids.clone(), &mut oracle, Some(&gold)).unwrap();
            assert_eq!(out.final_snapshot().unwrap().f1, Some(1.0), "{strategy}");
            let asked: Vec<usize> = out.curve.iter().map(|s| s.questions_asked).collect();
            assert!(asked.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
