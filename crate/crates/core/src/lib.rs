//! Dynamically growing multi-head demand forecaster.
//!
//! A shared MLP trunk is pre-trained on pooled data from every task. Tasks then
//! arrive one at a time; each new task is compared against the tasks already
//! learned (via averaged input vectors), two temporary regression heads are
//! fine-tuned (one from the pre-trained head, one from the head owning the most
//! similar task) and the one with the lower holdout loss is kept.
//!
//! Module map:
//!
//! - [`nn`]: dense layers, forward/backward, RMSE loss, AdamW, plateau scheduler
//!   and a finite-difference gradient checker.
//! - [`data`]: CSV ingestion, lag windows, phase splits, synthetic task banks.
//! - [`similarity`]: average feature vectors and task-distance metrics.
//! - [`model`]: the growing model, its head registry and the task loop.
//! - [`report`]: evaluation, cross-seed aggregation, head statistics, emitters.
//! - [`experiment`]: seeded end-to-end runs and metric ablations.
//!
//! Data-parallel loops (batch inference, per-task evaluation, similarity scans,
//! independent seeds) go through [`Exec`], which runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.
//! Results are identical either way.

pub mod data;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod report;
pub mod seed;
pub mod similarity;

pub use error::{Error, Result};
pub use exec::Exec;
