use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("invalid timestamp {0}")]
    InvalidTimestamp(f64),

    #[error("non-positive time delta ({0} s) between consecutive points")]
    NonPositiveTimeDelta(f64),

    #[error("out-of-order point: timestamp {got} is not after {last}")]
    OutOfOrder { last: f64, got: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unreachable: no path from node {from} to node {to}")]
    Unreachable { from: usize, to: usize },

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("degenerate detour: {0}")]
    DegenerateDetour(String),

    #[error("both classes are required to compute AUC")]
    SingleClass,

    #[error("missing divergence time for anomalous trajectory {0}")]
    MissingDivergence(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing store: {0}")]
    MissingStore(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
