//! The growing model: shared trunk, pre-trained head snapshot, head registry
//! and the task-by-task learning loop.

pub mod checkpoint;
pub mod config;
pub mod events;
pub mod fit;
pub mod plastic;
pub mod registry;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::TrainConfig;
pub use events::{load_events, read_events, save_events, write_events, Outcome, RmseSummary, TaskEvent};
pub use plastic::{
    selection_split, task_order, CandidateKind, CandidatePair, CandidateResult, Decision,
    PlasticModel, Step, Theta0, MIN_POST_WINDOWS,
};
pub use registry::{head_digest, HeadEntry, HeadId, HeadRegistry};
