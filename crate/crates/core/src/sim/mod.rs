//! Slot-level Monte-Carlo simulation of episodes and trade-off metrics.

pub mod episode;
pub mod metrics;
pub mod sweep;

pub use episode::{episode_rng, run_episode, simulate, Controller, EpisodeRecord, EpochLog, PolicySpec, SimOptions};
pub use metrics::{aggregate, TradeoffPoint};
pub use sweep::{sweep, write_csv, SweepOutput, SweepPolicy, CSV_HEADER};
