//! Function instance lifecycle.
//!
//! An instance is created busy with the request that triggered it (the cold
//! duration covers provisioning and service as one interval), becomes idle
//! when a request completes, and is terminated once it has been idle for its
//! expiration threshold. An arrival landing exactly on the expiration instant
//! does not reuse the instance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Result, SimError};
use crate::stochastic::{ProcessSpec, RngStream};

pub type InstanceId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceState {
    /// Serving the request that created it.
    Initializing,
    Running,
    Idle,
    Terminated,
}

/// How long an idle instance is kept before termination.
///
/// A fixed threshold is the common case; a process draws one threshold per
/// instance at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExpirationPolicy {
    Fixed(f64),
    Random(ProcessSpec),
}

impl ExpirationPolicy {
    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            ExpirationPolicy::Fixed(v) if !(v.is_finite() && *v > 0.0) => Err(SimError::config(
                field,
                format!("expiration threshold must be > 0, got {v}"),
            )),
            ExpirationPolicy::Fixed(_) => Ok(()),
            ExpirationPolicy::Random(spec) => spec.validate(field),
        }
    }

    /// Threshold for a newly created instance. Fixed policies consume no
    /// randomness.
    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        match self {
            ExpirationPolicy::Fixed(v) => *v,
            ExpirationPolicy::Random(spec) => spec.sample(rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            ExpirationPolicy::Fixed(v) => *v,
            ExpirationPolicy::Random(spec) => spec.mean().value,
        }
    }
}

impl From<f64> for ExpirationPolicy {
    fn from(v: f64) -> Self {
        ExpirationPolicy::Fixed(v)
    }
}

/// Illegal transition attempted on an instance. Always a simulator bug.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("instance {id}: cannot {action} while {state:?} at t={now}")]
pub struct TransitionError {
    pub id: InstanceId,
    pub action: &'static str,
    pub state: InstanceState,
    pub now: f64,
}

impl From<TransitionError> for SimError {
    fn from(e: TransitionError) -> Self {
        SimError::Logic {
            time: e.now,
            detail: e.to_string(),
            recent: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionInstance {
    pub id: InstanceId,
    pub creation_time: f64,
    pub state: InstanceState,
    /// Completion time of the current request; meaningful while busy.
    pub busy_until: f64,
    /// Start of the current idle period; meaningful while idle.
    pub idle_since: f64,
    pub expiration_threshold: f64,
    pub served_count: u64,
    pub is_cold_serving: bool,
    pub termination_time: Option<f64>,
    /// Bumped on every transition into Idle. Pending expiration events carry
    /// the value they were scheduled under and are stale once it changes.
    pub idle_epoch: u64,
}

impl FunctionInstance {
    pub fn create_cold(id: InstanceId, now: f64, cold_duration: f64, threshold: f64) -> Self {
        debug_assert!(cold_duration > 0.0);
        FunctionInstance {
            id,
            creation_time: now,
            state: InstanceState::Initializing,
            busy_until: now + cold_duration,
            idle_since: f64::NAN,
            expiration_threshold: threshold,
            served_count: 0,
            is_cold_serving: true,
            termination_time: None,
            idle_epoch: 0,
        }
    }

    /// An instance that already exists when the simulation starts, idle since
    /// `idle_since` (≤ 0).
    pub fn restored_idle(id: InstanceId, creation_time: f64, idle_since: f64, threshold: f64) -> Self {
        FunctionInstance {
            id,
            creation_time,
            state: InstanceState::Idle,
            busy_until: f64::NAN,
            idle_since,
            expiration_threshold: threshold,
            // it has served at least the request that created it
            served_count: 1,
            is_cold_serving: false,
            termination_time: None,
            idle_epoch: 1,
        }
    }

    /// An instance that already exists when the simulation starts, busy with
    /// a warm request until `busy_until`.
    pub fn restored_busy(id: InstanceId, creation_time: f64, busy_until: f64, threshold: f64) -> Self {
        FunctionInstance {
            id,
            creation_time,
            state: InstanceState::Running,
            busy_until,
            idle_since: f64::NAN,
            expiration_threshold: threshold,
            served_count: 0,
            is_cold_serving: false,
            termination_time: None,
            idle_epoch: 0,
        }
    }

    pub fn is_busy(&self) -> bool {
        matches!(self.state, InstanceState::Initializing | InstanceState::Running)
    }

    pub fn is_idle(&self) -> bool {
        self.state == InstanceState::Idle
    }

    /// Scheduled termination time while idle.
    pub fn expires_at(&self) -> Option<f64> {
        self.is_idle().then_some(self.idle_since + self.expiration_threshold)
    }

    /// Whether an arrival at `now` may be served warm by this instance.
    pub fn accepts_at(&self, now: f64) -> bool {
        self.is_idle() && now >= self.idle_since && now < self.idle_since + self.expiration_threshold
    }

    pub fn assign_warm(&mut self, now: f64, warm_duration: f64) -> std::result::Result<(), TransitionError> {
        if !self.accepts_at(now) {
            return Err(self.illegal("assign a warm request", now));
        }
        self.state = InstanceState::Running;
        self.busy_until = now + warm_duration;
        self.is_cold_serving = false;
        Ok(())
    }

    /// Finishes the current request and returns the termination candidate.
    pub fn complete(&mut self, now: f64) -> std::result::Result<f64, TransitionError> {
        if !self.is_busy() || now != self.busy_until {
            return Err(self.illegal("complete", now));
        }
        self.state = InstanceState::Idle;
        self.idle_since = now;
        self.is_cold_serving = false;
        self.served_count += 1;
        self.idle_epoch += 1;
        Ok(now + self.expiration_threshold)
    }

    pub fn terminate(&mut self, now: f64) -> std::result::Result<(), TransitionError> {
        if self.expires_at() != Some(now) {
            return Err(self.illegal("terminate", now));
        }
        self.state = InstanceState::Terminated;
        self.termination_time = Some(now);
        Ok(())
    }

    pub fn lifespan(&self) -> Option<f64> {
        self.termination_time.map(|t| t - self.creation_time)
    }

    fn illegal(&self, action: &'static str, now: f64) -> TransitionError {
        TransitionError {
            id: self.id,
            action,
            state: self.state,
            now,
        }
    }
}
