//! Resource allocation for downlink zero-forcing MISO-OFDMA with per-user
//! minimum rates.
//!
//! The crate covers the whole pipeline of a single scheduling slot:
//!
//! * [`model`]: configuration, Rayleigh channel draws, SDMA assignments.
//! * [`zf`]: pseudo-inverse beamformers and their power costs `beta`.
//! * [`power`]: water-filling, max-throughput and rate-constrained power
//!   allocation, plus a subgradient reference solver.
//! * [`sus`]: semiorthogonal user selection (init and search stages).
//! * [`scheduler`]: the reassignment heuristics (`alg1`, `alg2`) and the
//!   max-throughput baseline.
//! * [`bound`]: the enumeration-based Lagrangian dual upper bound.
//! * [`harness`]: Monte-Carlo sweeps, CSV records and gap metrics.

pub mod bound;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod model;
pub mod ops;
pub mod power;
pub mod scheduler;
pub mod sus;
pub mod zf;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::Grid;
pub use model::{generate_channel, parse_config, ChannelRealization, SdmaAssignment, SystemConfig};
pub use power::PowerSolution;
pub use scheduler::{allocate, AllocationResult, Method};
