//! Discrete-event performance simulator for scale-per-request serverless
//! (Function-as-a-Service) platforms.
//!
//! The [`engine`] runs the steady-state event loop, [`temporal`] starts from
//! a custom warm pool and aggregates replication ensembles, [`parsim`] lets
//! instances serve several requests at once, [`analysis`] provides what-if
//! sweeps and cost estimates, and [`trace`] ingests request logs.

pub mod analysis;
pub mod calendar;
pub mod engine;
pub mod error;
pub mod exec;
pub mod instance;
pub mod metrics;
pub mod parsim;
pub mod stochastic;
pub mod temporal;
pub mod trace;

pub use engine::{run, run_traced, EventTrace, SimConfig, TraceKind, TraceRecord, DEFAULT_SEED};
pub use error::{Result, SimError};
pub use instance::{ExpirationPolicy, FunctionInstance, InstanceState};
pub use metrics::{ArrivalOutcome, SimReport};
pub use stochastic::{ProcessSpec, RngStream};
