//! CSV files read and written by the tools.
//!
//! | file           | header                                               |
//! |----------------|------------------------------------------------------|
//! | `records.csv`  | `record_id` (further columns ignored)                |
//! | `votes.csv`    | `record_a,record_b,yes,total`                        |
//! | `gold.csv`     | `record_id,entity_id[,difficulty]`                   |
//! | `clusters.csv` | `record_id,cluster_id`                               |
//! | `curve.csv`    | `questions_asked,precision,recall,f1,reliability,blocks` |

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::crowd::GoldClustering;
use crate::error::{Error, Result};
use crate::graph::{Clustering, RecordId, UncertainGraph, VoteTally};
use crate::harness::MetricsSnapshot;

pub type VoteRow = (RecordId, RecordId, VoteTally);

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(csv_err(path))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("missing `{name}` column"),
        ),
    })
}

fn field<'r>(row: &'r csv::StringRecord, i: usize, path: &Path) -> Result<&'r str> {
    row.get(i).ok_or_else(|| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("line {}: too few fields", row.position().map_or(0, |p| p.line())),
        ),
    })
}

fn parse<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T> {
    s.parse().map_err(|_| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("cannot parse {what} from `{s}`"),
        ),
    })
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_records(path: &Path) -> Result<Vec<RecordId>> {
    let mut rdr = reader(path)?;
    let id = column(rdr.headers().map_err(csv_err(path))?, "record_id", path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        out.push(RecordId::new(field(&row, id, path)?)?);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[RecordId]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["record_id"]).map_err(csv_err(path))?;
    for r in records {
        w.write_record([r.as_str()]).map_err(csv_err(path))?;
    }
    flush(w, path)
}

pub fn read_votes(path: &Path) -> Result<Vec<VoteRow>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let a = column(&headers, "record_a", path)?;
    let b = column(&headers, "record_b", path)?;
    let yes = column(&headers, "yes", path)?;
    let total = column(&headers, "total", path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let tally = VoteTally::new(
            parse(field(&row, yes, path)?, "yes count", path)?,
            parse(field(&row, total, path)?, "total count", path)?,
        )?;
        out.push((
            RecordId::new(field(&row, a, path)?)?,
            RecordId::new(field(&row, b, path)?)?,
            tally,
        ));
    }
    Ok(out)
}

pub fn write_votes(path: &Path, votes: &[VoteRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["record_a", "record_b", "yes", "total"])
        .map_err(csv_err(path))?;
    for (a, b, t) in votes {
        w.write_record([a.as_str(), b.as_str(), &t.yes().to_string(), &t.total().to_string()])
            .map_err(csv_err(path))?;
    }
    flush(w, path)
}

pub fn read_gold(path: &Path) -> Result<GoldClustering> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let id = column(&headers, "record_id", path)?;
    let entity = column(&headers, "entity_id", path)?;
    let difficulty = headers.iter().position(|h| h == "difficulty");
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let d = match difficulty.and_then(|i| row.get(i)).filter(|s| !s.is_empty()) {
            Some(s) => Some(parse::<f64>(s, "difficulty", path)?),
            None => None,
        };
        rows.push((
            RecordId::new(field(&row, id, path)?)?,
            field(&row, entity, path)?.to_string(),
            d,
        ));
    }
    GoldClustering::new(rows)
}

/// Writes gold labels; the difficulty column is emitted only when some
/// record has a non-default difficulty.
pub fn write_gold(path: &Path, gold: &GoldClustering) -> Result<()> {
    let with_difficulty = gold.records().any(|r| gold.difficulty(r) != 1.0);
    let mut w = writer(path)?;
    if with_difficulty {
        w.write_record(["record_id", "entity_id", "difficulty"])
    } else {
        w.write_record(["record_id", "entity_id"])
    }
    .map_err(csv_err(path))?;
    for r in gold.records() {
        let entity = gold.entity(r).expect("record from gold");
        if with_difficulty {
            w.write_record([r.as_str(), entity, &gold.difficulty(r).to_string()])
        } else {
            w.write_record([r.as_str(), entity])
        }
        .map_err(csv_err(path))?;
    }
    flush(w, path)
}

/// One row per record in id order; a cluster is named after its smallest
/// record id.
pub fn write_clusters(path: &Path, graph: &UncertainGraph, clustering: &Clustering) -> Result<()> {
    clustering.check_universe(graph)?;
    let mut w = writer(path)?;
    w.write_record(["record_id", "cluster_id"]).map_err(csv_err(path))?;
    for (i, id) in graph.records().iter().enumerate() {
        let head = clustering.block(clustering.block_of(i))[0];
        w.write_record([id.as_str(), graph.record(head).as_str()])
            .map_err(csv_err(path))?;
    }
    flush(w, path)
}

/// Cluster label per record id.
pub fn read_clusters(path: &Path) -> Result<BTreeMap<RecordId, String>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(csv_err(path))?.clone();
    let id = column(&headers, "record_id", path)?;
    let cluster = column(&headers, "cluster_id", path)?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err(path))?;
        let rid = RecordId::new(field(&row, id, path)?)?;
        if out.contains_key(&rid) {
            return Err(Error::DuplicateRecord(rid.to_string()));
        }
        out.insert(rid, field(&row, cluster, path)?.to_string());
    }
    Ok(out)
}

/// Clustering of `graph`'s records from a cluster label map covering exactly
/// those records.
pub fn clustering_from_labels(graph: &UncertainGraph, labels: &BTreeMap<RecordId, String>) -> Result<Clustering> {
    if labels.len() != graph.len() {
        return Err(Error::UniverseMismatch(format!(
            "{} labelled records, {} in the graph",
            labels.len(),
            graph.len()
        )));
    }
    let per_record = graph
        .records()
        .iter()
        .map(|id| {
            labels
                .get(id)
                .ok_or_else(|| Error::UniverseMismatch(format!("`{id}` has no cluster")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering::from_labels(&per_record))
}

fn metric(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// Metrics are printed with six decimals; a metric without gold is empty.
pub fn write_curve(path: &Path, curve: &[MetricsSnapshot]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["questions_asked", "precision", "recall", "f1", "reliability", "blocks"])
        .map_err(csv_err(path))?;
    for s in curve {
        w.write_record([
            s.questions_asked.to_string(),
            metric(s.precision),
            metric(s.recall),
            metric(s.f1),
            format!("{:.6}", s.reliability),
            s.blocks.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    flush(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn votes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.csv");
        let rows = vec![(
            RecordId::new("a").unwrap(),
            RecordId::new("b").unwrap(),
            VoteTally::new(8, 10).unwrap(),
        )];
        write_votes(&path, &rows).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "record_a,record_b,yes,total\na,b,8,10\n");
        assert_eq!(read_votes(&path).unwrap(), rows);
    }

    #[test]
    fn records_ignore_extra_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        fs::write(&path, "name,record_id\nfoo,r1\nbar,r2\n").unwrap();
        let ids = read_records(&path).unwrap();
        assert_eq!(ids, vec![RecordId::new("r1").unwrap(), RecordId::new("r2").unwrap()]);
    }

    #[test]
    fn gold_with_optional_difficulty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.csv");
        fs::write(&path, "record_id,entity_id,difficulty\na,x,2\nb,x,\nc,y,0.5\n").unwrap();
        let gold = read_gold(&path).unwrap();
        assert_eq!(gold.difficulty(&RecordId::new("a").unwrap()), 2.0);
        assert_eq!(gold.difficulty(&RecordId::new("b").unwrap()), 1.0);
        let out = dir.path().join("gold2.csv");
        write_gold(&out, &gold).unwrap();
        assert_eq!(read_gold(&out).unwrap(), gold);
    }

    #[test]
    fn bad_tally_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.csv");
        fs::write(&path, "record_a,record_b,yes,total\na,b,11,10\n").unwrap();
        assert!(matches!(read_votes(&path), Err(Error::InvalidTally { .. })));
        fs::write(&path, "record_a,record_b,yes\na,b,1\n").unwrap();
        assert!(matches!(read_votes(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_records(Path::new("/nonexistent/records.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/records.csv"));
    }
}
