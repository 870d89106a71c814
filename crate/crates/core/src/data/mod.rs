//! Task banks: per-key demand series cut into lag windows and split into
//! pre-training, multi-task and evaluation phases.

pub mod cache;
pub mod ingest;
pub mod synth;
pub mod vocab;
pub mod window;

pub use cache::{load_bank, save_bank, BANK_FORMAT_VERSION};
pub use ingest::{ingest_csv, ingest_reader, CsvSchema, IngestOptions, IngestReport};
pub use synth::{synth_bank, ClusterPattern, SynthBank, SynthConfig, CLUSTER_SEPARATION};
pub use vocab::{Vocab, VocabMap};
pub use window::{make_windows, split_phases, LagWindow, Scale, TaskBank, TaskData, TaskKey, Window};

/// Lag used throughout unless configured otherwise.
pub const DEFAULT_LAG: usize = 15;
