use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("record id must be non-empty")]
    EmptyRecordId,
    #[error("record `{0}` declared more than once")]
    DuplicateRecord(String),
    #[error("unknown record `{0}`")]
    UnknownRecord(String),
    #[error("pair ({0}, {1}) appears more than once")]
    DuplicatePair(String, String),
    #[error("self-loop on record `{0}`")]
    SelfLoop(String),
    #[error("invalid vote tally: {yes} yes out of {total}")]
    InvalidTally { yes: u32, total: u32 },
    #[error("pair ({0}, {1}) is not an edge of the graph")]
    NotAnEdge(String, String),
    #[error("pair ({0}, {1}) has already been crowdsourced")]
    AlreadyCrowdsourced(String, String),
    #[error("not a partition of the record set: {0}")]
    NotAPartition(String),
    #[error("{what} is limited to {limit} records, got {got}")]
    TooManyRecords {
        what: &'static str,
        limit: usize,
        got: usize,
    },
    #[error("block has {edges} uncertain edges, exact evaluation is limited to {limit}; use monte-carlo")]
    EdgeLimitExceeded { edges: usize, limit: usize },
    #[error("block {0} is not part of the clustering")]
    UnknownBlock(usize),
    #[error("a block cannot be paired with itself")]
    SameBlock,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("pair ({0}, {1}) was not crowdsourced in the vote log")]
    NotInLog(String, String),
    #[error("crowd error rate is undefined for an empty answer list")]
    NoAnswers,
    #[error("record universes differ: {0}")]
    UniverseMismatch(String),
    #[error("interactive oracle: {0}")]
    Interactive(String),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stdio(#[from] std::io::Error),
}
