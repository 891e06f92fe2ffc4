//! Request logs: ingestion, simulator input estimation, and the empirical
//! metrics used to compare a platform against the simulator.
//!
//! The warm-pool estimator counts instances that were serving a request, or
//! finished one within the last `window` seconds. With the window equal to a
//! deterministic expiration threshold it reproduces the true live-instance
//! count; instances idle for longer than the window are missed otherwise.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Deserializer, Serialize};

use crate::engine::{EventTrace, TraceKind};
use crate::error::{Result, SimError};
use crate::stochastic::ProcessSpec;

pub const REQUEST_HEADER: [&str; 4] = ["start_time", "response_time", "is_cold", "instance_id"];
pub const DEFAULT_WINDOW: f64 = 600.0;
pub const DEFAULT_SAMPLE_STEP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub start_time: f64,
    pub response_time: f64,
    #[serde(deserialize_with = "flag")]
    pub is_cold: bool,
    pub instance_id: String,
}

impl RequestRecord {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.response_time
    }
}

fn flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(serde::de::Error::custom(format!(
            "is_cold must be one of 0, 1, true, false; got `{other}`"
        ))),
    }
}

pub fn read_requests_csv<R: Read>(r: R) -> Result<Vec<RequestRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = reader
        .headers()
        .map_err(|e| SimError::TraceFormat(e.to_string()))?
        .clone();
    for col in REQUEST_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(SimError::TraceFormat(format!("missing column `{col}`")));
        }
    }
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RequestRecord>().enumerate() {
        let rec = row.map_err(|e| SimError::TraceFormat(format!("record {}: {e}", i + 1)))?;
        if !(rec.response_time.is_finite() && rec.response_time > 0.0) {
            return Err(SimError::TraceFormat(format!(
                "record {}: response_time must be > 0, got {}",
                i + 1,
                rec.response_time
            )));
        }
        if !rec.start_time.is_finite() {
            return Err(SimError::TraceFormat(format!("record {}: bad start_time", i + 1)));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_requests_csv<W: Write>(records: &[RequestRecord], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let io = |e: csv::Error| SimError::TraceFormat(e.to_string());
    writer.write_record(REQUEST_HEADER).map_err(io)?;
    for r in records {
        writer
            .write_record([
                r.start_time.to_string(),
                r.response_time.to_string(),
                u8::from(r.is_cold).to_string(),
                r.instance_id.clone(),
            ])
            .map_err(io)?;
    }
    writer.flush().map_err(|e| SimError::TraceFormat(e.to_string()))
}

/// Pairs each served arrival in a scale-per-request event trace with the
/// departure of its instance. Rejected arrivals have no response and are
/// dropped. Output is sorted by start time.
pub fn records_from_trace(trace: &EventTrace) -> Result<Vec<RequestRecord>> {
    let mut pending: HashMap<u64, (f64, bool)> = HashMap::new();
    let mut records = Vec::new();
    for rec in &trace.records {
        let cold = match rec.kind {
            TraceKind::ArrivalCold => true,
            TraceKind::ArrivalWarm => false,
            TraceKind::Departure => {
                let id = rec.instance_id.ok_or_else(|| {
                    SimError::TraceFormat(format!("departure at {} without instance", rec.time))
                })?;
                let (start, is_cold) = pending.remove(&id).ok_or_else(|| {
                    SimError::TraceFormat(format!(
                        "departure at {} on instance {id} with no request in flight",
                        rec.time
                    ))
                })?;
                records.push(RequestRecord {
                    start_time: start,
                    response_time: rec.time - start,
                    is_cold,
                    instance_id: id.to_string(),
                });
                continue;
            }
            TraceKind::ArrivalRejected | TraceKind::Expiration => continue,
        };
        let id = rec.instance_id.ok_or_else(|| {
            SimError::TraceFormat(format!("served arrival at {} without instance", rec.time))
        })?;
        if pending.insert(id, (rec.time, cold)).is_some() {
            return Err(SimError::TraceFormat(format!(
                "instance {id} serves overlapping requests at {}; only single-request instances can be paired",
                rec.time
            )));
        }
    }
    if let Some((id, (start, _))) = pending.iter().min_by(|a, b| a.1 .0.total_cmp(&b.1 .0)) {
        return Err(SimError::TraceFormat(format!(
            "request started at {start} on instance {id} never completes"
        )));
    }
    records.sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterEstimate {
    pub arrival_rate: f64,
    pub warm_mean: f64,
    pub cold_mean: f64,
    pub warm_count: usize,
    pub cold_count: usize,
    #[serde(skip)]
    pub warm_empirical: ProcessSpec,
    #[serde(skip)]
    pub cold_empirical: ProcessSpec,
}

pub fn estimate_parameters(records: &[RequestRecord]) -> Result<ParameterEstimate> {
    let (cold, warm): (Vec<&RequestRecord>, Vec<&RequestRecord>) =
        records.iter().partition(|r| r.is_cold);
    if warm.is_empty() {
        return Err(SimError::Estimation("no warm requests in the log".into()));
    }
    if cold.is_empty() {
        return Err(SimError::Estimation("no cold requests in the log".into()));
    }
    let (first, last) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.start_time), hi.max(r.start_time))
    });
    if last <= first {
        return Err(SimError::Estimation(
            "arrival rate needs at least two distinct start times".into(),
        ));
    }
    let samples = |class: &[&RequestRecord]| -> Vec<f64> { class.iter().map(|r| r.response_time).collect() };
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let warm_samples = samples(&warm);
    let cold_samples = samples(&cold);
    Ok(ParameterEstimate {
        arrival_rate: (records.len() - 1) as f64 / (last - first),
        warm_mean: mean(&warm_samples),
        cold_mean: mean(&cold_samples),
        warm_count: warm.len(),
        cold_count: cold.len(),
        warm_empirical: ProcessSpec::Empirical {
            samples: warm_samples,
        },
        cold_empirical: ProcessSpec::Empirical {
            samples: cold_samples,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplePoint {
    pub t: f64,
    pub warm_pool: usize,
    pub running: usize,
    pub idle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMetrics {
    pub cold_start_probability: f64,
    pub mean_warm_pool: f64,
    pub mean_running: f64,
    pub mean_idle: f64,
    /// `mean_idle / mean_warm_pool`.
    pub wasted_capacity: f64,
    #[serde(skip)]
    pub samples: Vec<SamplePoint>,
}

/// Step function built from half-open `[start, end)` intervals.
fn step_events(intervals: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, i64)> {
    let mut events: Vec<(f64, i64)> = intervals.flat_map(|(a, b)| [(a, 1), (b, -1)]).collect();
    events.sort_by(|x, y| x.0.total_cmp(&y.0));
    events
}

struct StepCursor {
    events: Vec<(f64, i64)>,
    next: usize,
    level: i64,
}

impl StepCursor {
    fn new(events: Vec<(f64, i64)>) -> Self {
        StepCursor {
            events,
            next: 0,
            level: 0,
        }
    }

    /// Value at `t`; calls must have non-decreasing `t`.
    fn at(&mut self, t: f64) -> usize {
        while self.next < self.events.len() && self.events[self.next].0 <= t {
            self.level += self.events[self.next].1;
            self.next += 1;
        }
        self.level.max(0) as usize
    }
}

/// Samples the log every `sample_step` seconds from the first start to the
/// last completion.
pub fn empirical_metrics(records: &[RequestRecord], window: f64, sample_step: f64) -> Result<EmpiricalMetrics> {
    if records.is_empty() {
        return Err(SimError::Estimation("empty request log".into()));
    }
    if !(window.is_finite() && window > 0.0) {
        return Err(SimError::config("window", "must be > 0"));
    }
    if !(sample_step.is_finite() && sample_step > 0.0) {
        return Err(SimError::config("sample_step", "must be > 0"));
    }
    let cold = records.iter().filter(|r| r.is_cold).count();
    let cold_start_probability = cold as f64 / records.len() as f64;

    // per instance, the union of [start, end + window) over its requests
    let mut by_instance: HashMap<&str, Vec<(f64, f64)>> = HashMap::new();
    for r in records {
        by_instance
            .entry(&r.instance_id)
            .or_default()
            .push((r.start_time, r.end_time() + window));
    }
    let mut pool_intervals = Vec::new();
    for spans in by_instance.values_mut() {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut current = spans[0];
        for &(a, b) in &spans[1..] {
            if a <= current.1 {
                current.1 = current.1.max(b);
            } else {
                pool_intervals.push(current);
                current = (a, b);
            }
        }
        pool_intervals.push(current);
    }
    let mut pool = StepCursor::new(step_events(pool_intervals.into_iter()));
    let mut running = StepCursor::new(step_events(records.iter().map(|r| (r.start_time, r.end_time()))));

    let first = records.iter().map(|r| r.start_time).fold(f64::INFINITY, f64::min);
    let last = records.iter().map(|r| r.end_time()).fold(f64::NEG_INFINITY, f64::max);
    let mut samples = Vec::new();
    let mut k = 0u64;
    loop {
        let t = first + k as f64 * sample_step;
        if t > last {
            break;
        }
        let warm_pool = pool.at(t);
        let running_now = running.at(t);
        samples.push(SamplePoint {
            t,
            warm_pool,
            running: running_now,
            idle: warm_pool.saturating_sub(running_now),
        });
        k += 1;
    }

    let n = samples.len() as f64;
    let mean_of = |f: fn(&SamplePoint) -> usize| samples.iter().map(|s| f(s) as f64).sum::<f64>() / n;
    let mean_warm_pool = mean_of(|s| s.warm_pool);
    let mean_running = mean_of(|s| s.running);
    let mean_idle = mean_of(|s| s.idle);
    Ok(EmpiricalMetrics {
        cold_start_probability,
        mean_warm_pool,
        mean_running,
        mean_idle,
        wasted_capacity: if mean_warm_pool > 0.0 {
            mean_idle / mean_warm_pool
        } else {
            0.0
        },
        samples,
    })
}
