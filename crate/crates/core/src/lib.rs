//! Ensembles of activity classifiers trained on random sensor subsets, with
//! policy-gradient selection of the members that vote.
//!
//! The pipeline:
//!
//! 1. [`data`] windows a labelled multi-channel recording and builds
//!    leave-one-subject-out or k-fold splits.
//! 2. [`ensemble`] draws `k` Bernoulli channel masks and trains one
//!    [`nn::Classifier`] per masked view.
//! 3. [`selection`] picks the voting members: policy-gradient search,
//!    TopK, all members, or an exhaustive oracle.
//! 4. [`ensemble::ensemble_predict`] majority-votes the chosen members and
//!    [`metrics`] scores the result.
//!
//! [`experiment`] runs the whole comparison from a TOML config.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod selection;

pub use error::{Error, Result};
