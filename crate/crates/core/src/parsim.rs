//! Instances that serve up to `concurrency_value` requests at once.
//!
//! Routing picks the newest instance with a free slot; when every live
//! instance is full a new one is created (a cold start) subject to the same
//! maximum concurrency gate as the scale-per-request engine, otherwise the
//! request is rejected. An instance is idle, and accrues expiration time, only
//! while it has no request in flight. Request durations are drawn
//! independently of how many requests share the instance.
//!
//! With `concurrency_value = 1` the random stream is consumed in the same
//! order as [`crate::engine`], so both produce identical traces and reports.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::calendar::{Calendar, Event};
use crate::engine::{EventTrace, Observer, Recorder, SimConfig, TraceKind};
use crate::error::{Result, SimError};
use crate::instance::InstanceId;
use crate::metrics::{Accumulator, ArrivalOutcome, SimReport};
use crate::stochastic::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParConfig {
    pub base: SimConfig,
    pub concurrency_value: u32,
}

impl ParConfig {
    pub fn new(base: SimConfig, concurrency_value: u32) -> Self {
        ParConfig {
            base,
            concurrency_value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.concurrency_value == 0 {
            return Err(SimError::config("platform.concurrency_value", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SharedInstance {
    creation_time: f64,
    in_flight: u32,
    idle_since: f64,
    threshold: f64,
    idle_epoch: u64,
}

struct ParSimulation<'c> {
    config: &'c SimConfig,
    capacity: u32,
    rng: RngStream,
    calendar: Calendar,
    instances: BTreeMap<InstanceId, SharedInstance>,
    // live instances with in_flight < capacity
    available: BTreeSet<InstanceId>,
    busy: usize,
    next_id: InstanceId,
    acc: Accumulator,
    recorder: Recorder,
}

impl<'c> ParSimulation<'c> {
    fn new(config: &'c ParConfig, keep_trace: bool) -> Self {
        let base = &config.base;
        ParSimulation {
            config: base,
            capacity: config.concurrency_value,
            rng: RngStream::new(base.seed),
            calendar: Calendar::new(),
            instances: BTreeMap::new(),
            available: BTreeSet::new(),
            busy: 0,
            next_id: 0,
            acc: Accumulator::new(base.skip_initial, base.horizon),
            recorder: Recorder::new(keep_trace),
        }
    }

    fn run<O: Observer>(mut self, observer: &mut O) -> Result<(SimReport, Option<EventTrace>)> {
        let horizon = self.config.horizon;
        observer.on_state(0.0, 0, 0);
        let first = self.config.arrival.sample(&mut self.rng);
        self.calendar.schedule(first, Event::Arrival);

        while let Some(t) = self.calendar.peek_time() {
            if t > horizon {
                break;
            }
            let (t, event) = self.calendar.pop().expect("peeked");
            self.acc.advance(t);
            match event {
                Event::Arrival => {
                    let outcome = self.on_arrival(t);
                    self.acc.record_arrival(t, outcome);
                    observer.on_arrival(t, outcome);
                }
                Event::Departure { instance } => self.on_departure(t, instance)?,
                Event::Expiration { instance, epoch } => self.on_expiration(t, instance, epoch),
            }
            self.acc.set_counts(self.instances.len(), self.busy);
            observer.on_state(t, self.instances.len(), self.busy);
        }
        observer.finish(horizon);

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

    fn on_arrival(&mut self, t: f64) -> ArrivalOutcome {
        let (outcome, id) = if let Some(&id) = self.available.last() {
            let duration = self.config.warm_service.sample(&mut self.rng);
            let inst = self.instances.get_mut(&id).expect("available instances are live");
            debug_assert!(inst.in_flight > 0 || t < inst.idle_since + inst.threshold);
            if inst.in_flight == 0 {
                self.busy += 1;
            }
            inst.in_flight += 1;
            if inst.in_flight == self.capacity {
                self.available.remove(&id);
            }
            self.calendar
                .schedule(t + duration, Event::Departure { instance: id });
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
            self.instances.insert(
                id,
                SharedInstance {
                    creation_time: t,
                    in_flight: 1,
                    idle_since: f64::NAN,
                    threshold,
                    idle_epoch: 0,
                },
            );
            if self.capacity > 1 {
                self.available.insert(id);
            }
            self.busy += 1;
            self.calendar
                .schedule(t + duration, Event::Departure { instance: id });
            (ArrivalOutcome::Cold, Some(id))
        } else {
            (ArrivalOutcome::Rejected, None)
        };
        self.recorder.push(t, outcome.into(), id);
        let next = t + self.config.arrival.sample(&mut self.rng);
        self.calendar.schedule(next, Event::Arrival);
        outcome
    }

    fn on_departure(&mut self, t: f64, id: InstanceId) -> Result<()> {
        let Some(inst) = self.instances.get_mut(&id).filter(|i| i.in_flight > 0) else {
            return Err(self
                .recorder
                .missing(t, format!("departure for instance {id} with nothing in flight")));
        };
        inst.in_flight -= 1;
        self.available.insert(id);
        if inst.in_flight == 0 {
            self.busy -= 1;
            inst.idle_since = t;
            inst.idle_epoch += 1;
            self.calendar.schedule(
                t + inst.threshold,
                Event::Expiration {
                    instance: id,
                    epoch: inst.idle_epoch,
                },
            );
        }
        self.recorder.push(t, TraceKind::Departure, Some(id));
        Ok(())
    }

    fn on_expiration(&mut self, t: f64, id: InstanceId, epoch: u64) {
        let Some(inst) = self.instances.get(&id) else {
            return;
        };
        if inst.in_flight > 0 || inst.idle_epoch != epoch {
            return;
        }
        let lifespan = t - inst.creation_time;
        self.instances.remove(&id);
        self.available.remove(&id);
        self.acc.record_termination(t, lifespan);
        self.recorder.push(t, TraceKind::Expiration, Some(id));
    }
}

pub fn run_par(config: &ParConfig) -> Result<SimReport> {
    run_par_observed(config, &mut ())
}

pub fn run_par_traced(config: &ParConfig) -> Result<(SimReport, EventTrace)> {
    config.validate()?;
    let (report, trace) = ParSimulation::new(config, true).run(&mut ())?;
    Ok((report, trace.expect("trace requested")))
}

pub fn run_par_observed<O: Observer>(config: &ParConfig, observer: &mut O) -> Result<SimReport> {
    config.validate()?;
    ParSimulation::new(config, false)
        .run(observer)
        .map(|(report, _)| report)
}
