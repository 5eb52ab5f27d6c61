//! Benchmark harness: data ingestion, task streams, the training loop,
//! metrics and persistence.

pub mod config;
pub mod data;
pub mod metrics;
pub mod persist;
pub mod run;
pub mod stream;

pub use config::{FisherAccumulation, RunConfig};
pub use data::{load_idx_dataset, Dataset};
pub use metrics::{compute_metrics, AccuracyMatrix, Metrics};
pub use persist::{load_run_record, persist_results, RunRecord, SummaryWriter};
pub use run::{mean_std, run_sequence, RunOutcome};
pub use stream::{build_task_stream, build_task_stream_from_base, Scenario, StreamSpec, TaskStream};
