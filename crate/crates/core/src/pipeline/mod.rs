//! Configuration, persistence and the online/offline orchestration.

pub mod config;
pub mod online;
pub mod refresh;
pub mod store;

pub use config::PipelineConfig;
pub use online::{OnlineTracker, TrackerOutput, TrajectorySummary};
pub use refresh::{build_history, periodic_refresh, Snapshot, SnapshotCell};
pub use store::Workspace;
