//! Seeded random-variate generation for arrival and service processes.
//!
//! A [`ProcessSpec`] describes a distribution of strictly positive durations.
//! All randomness in a simulation run flows through a single [`RngStream`],
//! consumed in event order, so equal seeds reproduce equal traces.
//!
//! Exponential variates use inverse-transform sampling on an open unit
//! interval: every draw consumes exactly one generator word, which keeps
//! arrival sequences aligned across configurations that share a seed.

use rand::distr::{Distribution, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Coefficient of variation above which the untruncated Gaussian mean is
/// flagged as biased with respect to the resample-until-positive sampler.
pub const GAUSSIAN_TRUNCATION_CV: f64 = 0.25;

/// A distribution of positive durations, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ProcessSpec {
    Exponential { rate: f64 },
    Deterministic { value: f64 },
    Gaussian { mean: f64, std: f64 },
    Empirical { samples: Vec<f64> },
}

/// Analytic (or sample) mean of a process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub value: f64,
    /// Set for Gaussian processes whose std/mean ratio makes the untruncated
    /// mean a noticeably low estimate of the sampled mean.
    pub truncation_biased: bool,
}

impl ProcessSpec {
    pub fn exponential_with_mean(mean: f64) -> Self {
        ProcessSpec::Exponential { rate: 1.0 / mean }
    }

    /// Checks the distribution parameters. `field` names the config location
    /// reported in the error.
    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            ProcessSpec::Exponential { rate } if !positive(*rate) => {
                Err(SimError::config(field, format!("exponential rate must be > 0, got {rate}")))
            }
            ProcessSpec::Deterministic { value } if !positive(*value) => Err(SimError::config(
                field,
                format!("deterministic value must be > 0, got {value}"),
            )),
            ProcessSpec::Gaussian { mean, std } => {
                if !positive(*mean) {
                    Err(SimError::config(field, format!("gaussian mean must be > 0, got {mean}")))
                } else if !(std.is_finite() && *std >= 0.0) {
                    Err(SimError::config(field, format!("gaussian std must be >= 0, got {std}")))
                } else {
                    Ok(())
                }
            }
            ProcessSpec::Empirical { samples } => {
                if samples.is_empty() {
                    return Err(SimError::config(field, "empirical sample list is empty"));
                }
                match samples.iter().find(|s| !positive(**s)) {
                    Some(bad) => Err(SimError::config(
                        field,
                        format!("empirical samples must be > 0, got {bad}"),
                    )),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Draws one duration. The spec must have passed [`ProcessSpec::validate`].
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            ProcessSpec::Exponential { rate } => {
                let u: f64 = rng.inner.sample(Open01);
                -u.ln() / rate
            }
            ProcessSpec::Deterministic { value } => *value,
            ProcessSpec::Gaussian { mean, std } => {
                if *std == 0.0 {
                    return *mean;
                }
                loop {
                    let z: f64 = StandardNormal.sample(&mut rng.inner);
                    let x = mean + std * z;
                    if x > 0.0 {
                        return x;
                    }
                }
            }
            ProcessSpec::Empirical { samples } => samples[rng.inner.random_range(0..samples.len())],
        }
    }

    pub fn mean(&self) -> MeanEstimate {
        let (value, truncation_biased) = match self {
            ProcessSpec::Exponential { rate } => (1.0 / rate, false),
            ProcessSpec::Deterministic { value } => (*value, false),
            ProcessSpec::Gaussian { mean, std } => (*mean, std / mean > GAUSSIAN_TRUNCATION_CV),
            ProcessSpec::Empirical { samples } => {
                (samples.iter().sum::<f64>() / samples.len() as f64, false)
            }
        };
        MeanEstimate {
            value,
            truncation_biased,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            ProcessSpec::Deterministic { .. } => true,
            ProcessSpec::Gaussian { std, .. } => *std == 0.0,
            _ => false,
        }
    }
}

/// Validated sampling entry point.
pub fn sample(spec: &ProcessSpec, rng: &mut RngStream) -> Result<f64> {
    spec.validate("process")?;
    Ok(spec.sample(rng))
}

/// The single random stream owned by one simulation run.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}
