use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("window longer than data (window {window}, longest subject run {longest})")]
    WindowTooLong { window: usize, longest: usize },

    #[error("empty sensor subset")]
    EmptySensorSubset,

    #[error("empty model subset")]
    EmptyModelSubset,

    #[error("no voters")]
    NoVoters,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("split error: {0}")]
    Split(String),

    #[error("mask sampling gave up after {attempts} all-zero draws; increase the inclusion probability (p = {p}, n = {n})")]
    MaskSampling { attempts: usize, p: f64, n: usize },

    #[error("ensemble member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("repeat {repeat}, fold {fold}: {source}")]
    Cell {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("search collapsed: every sampled selection was empty")]
    SearchCollapsed,

    #[error("oracle limit: brute force supports at most {max} members, got {k}")]
    OracleLimit { k: usize, max: usize },

    #[error("report mismatch: {0}")]
    ReportMismatch(String),

    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}
