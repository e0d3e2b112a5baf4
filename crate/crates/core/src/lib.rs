//! Discrete-event simulator for heterogeneous vehicular networks: IEEE
//! 802.11p beaconing with LTE as a fallback, beacon-rate adaptation and
//! distributed RAT selection.

// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfa;
pub mod config;
pub mod drrm;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mobility;
pub mod radio;
pub mod time;

pub use config::RunConfig;
pub use engine::{run, run_replicates, run_traced};
pub use error::{ConfigError, SimError};
pub use metrics::{AggregateMetrics, RunMetrics};
pub use time::SimTime;
