//! Scale-per-request event loop.
//!
//! Each arrival is routed to the most recently created idle instance; if none
//! is idle a new instance is created (a cold start) unless the number of busy
//! instances has reached the maximum concurrency level, in which case the
//! request is rejected. There is no request queue.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::{Calendar, Event};
use crate::error::{Result, SimError};
use crate::instance::{ExpirationPolicy, FunctionInstance, InstanceId, TransitionError};
use crate::metrics::{Accumulator, ArrivalOutcome, SimReport};
use crate::stochastic::{ProcessSpec, RngStream};

pub const DEFAULT_SEED: u64 = 0x5EED_FAA5;

const RECENT_EVENTS: usize = 32;

/// Full input of a simulation run. Durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub arrival: ProcessSpec,
    pub warm_service: ProcessSpec,
    pub cold_service: ProcessSpec,
    pub expiration_threshold: ExpirationPolicy,
    /// Cap on simultaneously busy instances; `None` is unbounded.
    pub max_concurrency: Option<u64>,
    pub horizon: f64,
    pub skip_initial: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Poisson arrivals with exponential warm and cold service times, a fixed
    /// threshold, a 10^6 s horizon and a 100 s warm-up.
    pub fn exponential(arrival_rate: f64, warm_mean: f64, cold_mean: f64, threshold: f64) -> Self {
        SimConfig {
            arrival: ProcessSpec::Exponential { rate: arrival_rate },
            warm_service: ProcessSpec::exponential_with_mean(warm_mean),
            cold_service: ProcessSpec::exponential_with_mean(cold_mean),
            expiration_threshold: ExpirationPolicy::Fixed(threshold),
            max_concurrency: None,
            horizon: 1e6,
            skip_initial: 100.0,
            seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arrival.validate("workload.arrival")?;
        self.warm_service.validate("workload.warm_service")?;
        self.cold_service.validate("workload.cold_service")?;
        self.expiration_threshold
            .validate("platform.expiration_threshold")?;
        if self.max_concurrency == Some(0) {
            return Err(SimError::config(
                "platform.max_concurrency",
                "must be >= 1 when bounded",
            ));
        }
        if !(self.skip_initial.is_finite() && self.skip_initial >= 0.0) {
            return Err(SimError::config(
                "simulation.skip_initial",
                format!("must be >= 0, got {}", self.skip_initial),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > self.skip_initial) {
            return Err(SimError::config(
                "simulation.horizon",
                format!(
                    "must be finite and greater than skip_initial ({}), got {}",
                    self.skip_initial, self.horizon
                ),
            ));
        }
        Ok(())
    }

    /// Mean arrival rate implied by the arrival process.
    pub fn arrival_rate(&self) -> f64 {
        match self.arrival {
            ProcessSpec::Exponential { rate } => rate,
            ref other => 1.0 / other.mean().value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraceKind {
    ArrivalCold,
    ArrivalWarm,
    ArrivalRejected,
    Departure,
    Expiration,
}

impl TraceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceKind::ArrivalCold => "arrival-cold",
            TraceKind::ArrivalWarm => "arrival-warm",
            TraceKind::ArrivalRejected => "arrival-rejected",
            TraceKind::Departure => "departure",
            TraceKind::Expiration => "expiration",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TraceKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "arrival-cold" => TraceKind::ArrivalCold,
            "arrival-warm" => TraceKind::ArrivalWarm,
            "arrival-rejected" => TraceKind::ArrivalRejected,
            "departure" => TraceKind::Departure,
            "expiration" => TraceKind::Expiration,
            other => return Err(SimError::TraceFormat(format!("unknown event kind `{other}`"))),
        })
    }
}

impl From<ArrivalOutcome> for TraceKind {
    fn from(o: ArrivalOutcome) -> Self {
        match o {
            ArrivalOutcome::Cold => TraceKind::ArrivalCold,
            ArrivalOutcome::Warm => TraceKind::ArrivalWarm,
            ArrivalOutcome::Rejected => TraceKind::ArrivalRejected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: TraceKind,
    /// Absent for rejected arrivals.
    pub instance_id: Option<InstanceId>,
}

pub const TRACE_HEADER: &str = "time,kind,instance_id";

/// Ordered log of every processed event.
///
/// When tracing, completions of requests still in flight at the horizon are
/// appended after it so that every served arrival has a matching departure.
/// Those trailing records do not contribute to any metric.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for r in &self.records {
            match r.instance_id {
                Some(id) => writeln!(w, "{:.16e},{},{}", r.time, r.kind, id)?,
                None => writeln!(w, "{:.16e},{},", r.time, r.kind)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| SimError::TraceFormat(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || (n == 0 && line == TRACE_HEADER) {
                continue;
            }
            let bad = |what: &str| SimError::TraceFormat(format!("line {}: {what}", n + 1));
            let mut fields = line.split(',');
            let (Some(time), Some(kind), Some(id), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected 3 fields"));
            };
            let time = time.parse().map_err(|_| bad("bad time"))?;
            let kind = kind.parse()?;
            let instance_id = if id.is_empty() {
                None
            } else {
                Some(id.parse().map_err(|_| bad("bad instance id"))?)
            };
            records.push(TraceRecord {
                time,
                kind,
                instance_id,
            });
        }
        Ok(EventTrace { records })
    }
}

/// Hook for per-event measurements beyond the window accumulators.
pub trait Observer {
    fn on_arrival(&mut self, _time: f64, _outcome: ArrivalOutcome) {}
    /// Called after every processed event with the resulting live and busy
    /// instance counts.
    fn on_state(&mut self, _time: f64, _live: usize, _busy: usize) {}
    fn finish(&mut self, _horizon: f64) {}
}

impl Observer for () {}

/// Records shared by both event loops.
#[derive(Debug)]
pub(crate) struct Recorder {
    recent: VecDeque<TraceRecord>,
    pub(crate) trace: Option<Vec<TraceRecord>>,
}

impl Recorder {
    pub(crate) fn new(keep_trace: bool) -> Self {
        Recorder {
            recent: VecDeque::with_capacity(RECENT_EVENTS),
            trace: keep_trace.then(Vec::new),
        }
    }

    pub(crate) fn push(&mut self, time: f64, kind: TraceKind, instance_id: Option<InstanceId>) {
        let rec = TraceRecord {
            time,
            kind,
            instance_id,
        };
        if self.recent.len() == RECENT_EVENTS {
            self.recent.pop_front();
        }
        self.recent.push_back(rec);
        if let Some(t) = &mut self.trace {
            t.push(rec);
        }
    }

    pub(crate) fn violation(&self, e: TransitionError) -> SimError {
        SimError::Logic {
            time: e.now,
            detail: e.to_string(),
            recent: self.recent.iter().copied().collect(),
        }
    }

    pub(crate) fn missing(&self, time: f64, what: String) -> SimError {
        SimError::Logic {
            time,
            detail: what,
            recent: self.recent.iter().copied().collect(),
        }
    }
}

/// Mutable state of one scale-per-request run.
pub(crate) struct Simulation<'c> {
    config: &'c SimConfig,
    horizon: f64,
    rng: RngStream,
    calendar: Calendar,
    instances: BTreeMap<InstanceId, FunctionInstance>,
    // ids increase with creation time, so the newest idle instance is the
    // largest id in this set
    idle: BTreeSet<InstanceId>,
    busy: usize,
    next_id: InstanceId,
    acc: Accumulator,
    recorder: Recorder,
}

impl<'c> Simulation<'c> {
    pub(crate) fn new(config: &'c SimConfig, horizon: f64, skip_initial: f64, keep_trace: bool) -> Self {
        Simulation {
            config,
            horizon,
            rng: RngStream::new(config.seed),
            calendar: Calendar::new(),
            instances: BTreeMap::new(),
            idle: BTreeSet::new(),
            busy: 0,
            next_id: 0,
            acc: Accumulator::new(skip_initial, horizon),
            recorder: Recorder::new(keep_trace),
        }
    }

    pub(crate) fn rng(&mut self) -> &mut RngStream {
        &mut self.rng
    }

    /// Adds a pre-existing instance. Must be called in creation-time order
    /// before [`Simulation::run`].
    pub(crate) fn restore(&mut self, inst: FunctionInstance) {
        debug_assert_eq!(inst.id, self.next_id);
        self.next_id = inst.id + 1;
        if inst.is_busy() {
            self.busy += 1;
            self.calendar
                .schedule(inst.busy_until, Event::Departure { instance: inst.id });
        } else {
            self.idle.insert(inst.id);
            let at = inst.expires_at().expect("restored idle instance").max(0.0);
            self.calendar.schedule(
                at,
                Event::Expiration {
                    instance: inst.id,
                    epoch: inst.idle_epoch,
                },
            );
        }
        self.instances.insert(inst.id, inst);
        self.acc.set_counts(self.instances.len(), self.busy);
    }

    pub(crate) fn run<O: Observer>(mut self, observer: &mut O) -> Result<(SimReport, Option<EventTrace>)> {
        observer.on_state(0.0, self.instances.len(), self.busy);
        let first = self.config.arrival.sample(&mut self.rng);
        self.calendar.schedule(first, Event::Arrival);

        while let Some(t) = self.calendar.peek_time() {
            if t > self.horizon {
                break;
            }
            let (t, event) = self.calendar.pop().expect("peeked");
            self.acc.advance(t);
            match event {
                Event::Arrival => {
                    let outcome = self.on_arrival(t)?;
                    self.acc.record_arrival(t, outcome);
                    observer.on_arrival(t, outcome);
                }
                Event::Departure { instance } => self.on_departure(t, instance)?,
                Event::Expiration { instance, epoch } => self.on_expiration(t, instance, epoch)?,
            }
            self.acc.set_counts(self.instances.len(), self.busy);
            observer.on_state(t, self.instances.len(), self.busy);
        }
        observer.finish(self.horizon);

        if self.recorder.trace.is_some() {
            while let Some((t, event)) = self.calendar.pop() {
                if let Event::Departure { instance } = event {
                    self.recorder.push(t, TraceKind::Departure, Some(instance));
                }
            }
        }
        let trace = self.recorder.trace.take().map(|records| EventTrace { records });
        Ok((self.acc.finish(), trace))
    }

    fn on_arrival(&mut self, t: f64) -> Result<ArrivalOutcome> {
        let (outcome, id) = if let Some(id) = self.idle.pop_last() {
            let duration = self.config.warm_service.sample(&mut self.rng);
            let inst = self
                .instances
                .get_mut(&id)
                .expect("idle set tracks live instances");
            inst.assign_warm(t, duration)
                .map_err(|e| self.recorder.violation(e))?;
            self.busy += 1;
            self.calendar
                .schedule(inst.busy_until, Event::Departure { instance: id });
            (ArrivalOutcome::Warm, Some(id))
        } else if self
            .config
            .max_concurrency
            .is_none_or(|cap| (self.busy as u64) < cap)
        {
            let duration = self.config.cold_service.sample(&mut self.rng);
            let threshold = self.config.expiration_threshold.draw(&mut self.rng);
            let id = self.next_id;
            self.next_id += 1;
            let inst = FunctionInstance::create_cold(id, t, duration, threshold);
            self.calendar
                .schedule(inst.busy_until, Event::Departure { instance: id });
            self.instances.insert(id, inst);
            self.busy += 1;
            (ArrivalOutcome::Cold, Some(id))
        } else {
            (ArrivalOutcome::Rejected, None)
        };
        self.recorder.push(t, outcome.into(), id);
        let next = t + self.config.arrival.sample(&mut self.rng);
        self.calendar.schedule(next, Event::Arrival);
        Ok(outcome)
    }

    fn on_departure(&mut self, t: f64, id: InstanceId) -> Result<()> {
        let Some(inst) = self.instances.get_mut(&id) else {
            return Err(self
                .recorder
                .missing(t, format!("departure for unknown instance {id}")));
        };
        let expires = inst.complete(t).map_err(|e| self.recorder.violation(e))?;
        let epoch = inst.idle_epoch;
        self.busy -= 1;
        self.idle.insert(id);
        self.calendar.schedule(
            expires,
            Event::Expiration {
                instance: id,
                epoch,
            },
        );
        self.recorder.push(t, TraceKind::Departure, Some(id));
        Ok(())
    }

    fn on_expiration(&mut self, t: f64, id: InstanceId, epoch: u64) -> Result<()> {
        let Some(inst) = self.instances.get_mut(&id) else {
            return Ok(());
        };
        if !inst.is_idle() || inst.idle_epoch != epoch {
            // cancelled by a later warm assignment
            return Ok(());
        }
        // restored instances may be overdue; they expire at the start
        let at = inst.expires_at().expect("idle");
        if at < t {
            inst.idle_since = t - inst.expiration_threshold;
        }
        inst.terminate(t).map_err(|e| self.recorder.violation(e))?;
        let lifespan = inst.lifespan().expect("terminated");
        self.instances.remove(&id);
        self.idle.remove(&id);
        self.acc.record_termination(t, lifespan);
        self.recorder.push(t, TraceKind::Expiration, Some(id));
        Ok(())
    }
}

/// Runs a steady-state simulation from an empty system.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    run_observed(config, &mut ())
}

/// Like [`run`], also returning the full event trace.
pub fn run_traced(config: &SimConfig) -> Result<(SimReport, EventTrace)> {
    config.validate()?;
    let sim = Simulation::new(config, config.horizon, config.skip_initial, true);
    let (report, trace) = sim.run(&mut ())?;
    Ok((report, trace.expect("trace requested")))
}

pub fn run_observed<O: Observer>(config: &SimConfig, observer: &mut O) -> Result<SimReport> {
    config.validate()?;
    let sim = Simulation::new(config, config.horizon, config.skip_initial, false);
    sim.run(observer).map(|(report, _)| report)
}
