//! Event generation, end-to-end simulation wiring, configuration, metrics,
//! sweeps and trace output.

pub mod config;
pub mod metrics;
pub mod sim;
pub mod source;
pub mod sweep;
pub mod trace;

pub use config::{ConfigError, RunConfig};
pub use metrics::Metrics;
pub use sim::{run_sim, SimError, SimOutcome};
pub use source::{EventSource, SourceKind, SourcePoll, SourceSpec};
pub use sweep::{rows_to_csv, sweep, SweepRow};
