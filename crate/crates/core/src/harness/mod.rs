//! Monte-Carlo ensembles, sweeps, CSV records and gap metrics.

pub mod gaps;
pub mod record;
pub mod sweep;

pub use gaps::{compute_gaps, mean_gaps, GapMetrics};
pub use record::{read_records, write_records, RunMethod, RunRecord, CSV_HEADER};
pub use sweep::{run_sweep, run_trials, trial_seed, SweepParam, SweepSpec, Timing};
