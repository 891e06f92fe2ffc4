//! What-if sweeps and cost estimation on top of simulation reports.

mod cost;
mod sweep;

pub use cost::{estimate_cost, CostEstimate, CostSpec};
pub use sweep::{sweep, write_sweep_csv, SweepAxis, SweepMetric, SweepParam, SweepRow, SweepSpec, DEFAULT_MAX_RUNS};
