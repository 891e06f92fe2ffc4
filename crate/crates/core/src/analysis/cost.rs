use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::metrics::SimReport;

/// Pay-per-use price list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    /// Currency per accepted request.
    #[serde(default)]
    pub price_per_request: f64,
    /// Currency per GB-second of billed execution.
    #[serde(default)]
    pub price_per_memory_second: f64,
    /// Configured function memory in GB.
    #[serde(default)]
    pub memory: f64,
    /// Share of a cold request's duration that is billed; the rest is
    /// platform initialization.
    #[serde(default = "full")]
    pub billed_cold_fraction: f64,
    /// Provider-side currency per live instance-second.
    #[serde(default)]
    pub provider_unit_cost: f64,
}

fn full() -> f64 {
    1.0
}

impl CostSpec {
    pub fn validate(&self) -> Result<()> {
        let prices = [
            ("cost.price_per_request", self.price_per_request),
            ("cost.price_per_memory_second", self.price_per_memory_second),
            ("cost.memory", self.memory),
            ("cost.provider_unit_cost", self.provider_unit_cost),
        ];
        for (field, v) in prices {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::config(field, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.billed_cold_fraction) {
            return Err(SimError::config(
                "cost.billed_cold_fraction",
                format!("must be within [0, 1], got {}", self.billed_cold_fraction),
            ));
        }
        Ok(())
    }
}

/// Cost rates in currency per second of wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostEstimate {
    pub accepted_rate: f64,
    pub developer_cost_rate: f64,
    pub provider_cost_rate: f64,
}

/// Developer charges follow the accepted request rate and the billed share of
/// each request's duration, weighted by the measured cold-start probability.
/// Provider cost is proportional to the average number of live instances.
pub fn estimate_cost(
    report: &SimReport,
    arrival_rate: f64,
    warm_mean: f64,
    cold_mean: f64,
    cost: &CostSpec,
) -> CostEstimate {
    let accepted_rate = arrival_rate * (1.0 - report.rejection_probability);
    let p_cold = report.cold_start_probability;
    let billed_seconds =
        p_cold * cost.billed_cold_fraction * cold_mean + (1.0 - p_cold) * warm_mean;
    CostEstimate {
        accepted_rate,
        developer_cost_rate: accepted_rate
            * (cost.price_per_request + cost.price_per_memory_second * cost.memory * billed_seconds),
        provider_cost_rate: cost.provider_unit_cost * report.avg_server_count,
    }
}
