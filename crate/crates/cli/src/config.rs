//! Config file schema. TOML by default, JSON when the path ends in `.json`.

use std::path::Path;

use faas_sim::analysis::{CostSpec, SweepAxis, SweepSpec};
use faas_sim::parsim::ParConfig;
use faas_sim::temporal::InitialState;
use faas_sim::{ExpirationPolicy, ProcessSpec, SimConfig, SimError, DEFAULT_SEED};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub workload: Workload,
    pub platform: Platform,
    pub simulation: Simulation,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub arrival: ProcessSpec,
    pub warm_service: ProcessSpec,
    pub cold_service: ProcessSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Platform {
    pub expiration_threshold: ExpirationPolicy,
    #[serde(default)]
    pub max_concurrency: Option<u64>,
    #[serde(default = "one_u32")]
    pub concurrency_value: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulation {
    pub horizon: f64,
    #[serde(default)]
    pub skip_initial: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one_usize")]
    pub replications: usize,
    /// Sampling step for transient ensembles.
    #[serde(default)]
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<SweepAxis>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub max_runs: Option<usize>,
    #[serde(default)]
    pub common_random_numbers: bool,
}

fn one_u32() -> u32 {
    1
}

fn one_usize() -> usize {
    1
}

/// Adds the key named by serde's "missing field" / "unknown field" messages
/// to the path, so `workload` + "missing field `arrival`" reads
/// `workload.arrival`.
fn field_path(path: &str, message: &str) -> String {
    let named = ["missing field `", "unknown field `"]
        .iter()
        .find_map(|prefix| message.split_once(prefix))
        .and_then(|(_, rest)| rest.split('`').next());
    match (path, named) {
        (".", Some(key)) => key.to_string(),
        (_, Some(key)) if path != key && !path.ends_with(&format!(".{key}")) => format!("{path}.{key}"),
        _ => path.to_string(),
    }
}

fn located<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> SimError {
    let path = err.path().to_string();
    let full = err.inner().to_string();
    // toml messages carry a source excerpt; keep the explanatory line
    let message = full
        .lines()
        .map(str::trim)
        .rfind(|l| !l.is_empty() && !l.contains('|'))
        .unwrap_or(&full);
    let location = full.lines().next().filter(|l| l.starts_with("TOML parse error"));
    let reason = match location {
        Some(loc) if loc != message => format!("{message} ({})", loc.trim_start_matches("TOML parse error ")),
        _ => message.to_string(),
    };
    SimError::config(field_path(&path, message), reason)
}

impl ConfigFile {
    pub fn parse(text: &str, json: bool) -> Result<Self, SimError> {
        let parsed = if json {
            let mut de = serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(&mut de).map_err(located)?
        } else {
            let de = toml::Deserializer::parse(text)
                .map_err(|e| SimError::config("<file>", e.to_string().trim_end().to_string()))?;
            serde_path_to_error::deserialize(de).map_err(located)?
        };
        Ok(parsed)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::config(path.display().to_string(), e.to_string()))?;
        let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, json)
    }

    pub fn sim_config(&self, seed: Option<u64>) -> SimConfig {
        SimConfig {
            arrival: self.workload.arrival.clone(),
            warm_service: self.workload.warm_service.clone(),
            cold_service: self.workload.cold_service.clone(),
            expiration_threshold: self.platform.expiration_threshold.clone(),
            max_concurrency: self.platform.max_concurrency,
            horizon: self.simulation.horizon,
            skip_initial: self.simulation.skip_initial,
            seed: seed.or(self.simulation.seed).unwrap_or(DEFAULT_SEED),
        }
    }

    pub fn par_config(&self, seed: Option<u64>, concurrency_value: Option<u32>) -> ParConfig {
        ParConfig::new(
            self.sim_config(seed),
            concurrency_value.unwrap_or(self.platform.concurrency_value),
        )
    }

    pub fn sweep_spec(&self, seed: Option<u64>, concurrency_value: Option<u32>) -> Result<SweepSpec, SimError> {
        let section = self
            .sweep
            .as_ref()
            .ok_or_else(|| SimError::config("sweep", "section required by the sweep command"))?;
        let par = self.par_config(seed, concurrency_value);
        let mut spec = SweepSpec::new(
            par.base,
            section.axes.clone(),
            section.replications.unwrap_or(self.simulation.replications),
        );
        spec.concurrency_value = par.concurrency_value;
        spec.common_random_numbers = section.common_random_numbers;
        if let Some(max) = section.max_runs {
            spec.max_runs = max;
        }
        Ok(spec)
    }
}
