//! Measurement-window accumulators and the steady-state report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// How an arrival was handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalOutcome {
    Cold,
    Warm,
    Rejected,
}

/// Output metrics of one run, measured over `[skip_initial, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cold_start_probability: f64,
    pub rejection_probability: f64,
    /// Time-averaged number of live (busy or idle) instances.
    pub avg_server_count: f64,
    pub avg_running_count: f64,
    pub avg_idle_count: f64,
    /// Mean creation-to-termination span of instances terminated inside the
    /// window; `None` when none terminated.
    pub avg_lifespan: Option<f64>,
    /// Fraction of measured time spent with exactly `k` live instances.
    pub instance_count_histogram: BTreeMap<usize, f64>,
    pub requests_total: u64,
    pub requests_cold: u64,
    pub requests_warm: u64,
    pub requests_rejected: u64,
    /// `avg_running_count / avg_server_count`.
    pub avg_utilization: f64,
    /// `avg_idle_count / avg_server_count`.
    pub avg_wasted_capacity: f64,
}

impl SimReport {
    pub fn accepted_fraction(&self) -> f64 {
        1.0 - self.rejection_probability
    }
}

pub fn instance_count_distribution(report: &SimReport) -> &BTreeMap<usize, f64> {
    &report.instance_count_histogram
}

/// Time-weighted and request-weighted accumulators clipped to a window.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    window_start: f64,
    window_end: f64,
    last_time: f64,
    live: usize,
    busy: usize,
    live_area: f64,
    busy_area: f64,
    idle_area: f64,
    time_at_count: Vec<f64>,
    cold: u64,
    warm: u64,
    rejected: u64,
    lifespan_sum: f64,
    lifespan_n: u64,
}

impl Accumulator {
    pub fn new(window_start: f64, window_end: f64) -> Self {
        Accumulator {
            window_start,
            window_end,
            last_time: 0.0,
            live: 0,
            busy: 0,
            live_area: 0.0,
            busy_area: 0.0,
            idle_area: 0.0,
            time_at_count: Vec::new(),
            cold: 0,
            warm: 0,
            rejected: 0,
            lifespan_sum: 0.0,
            lifespan_n: 0,
        }
    }

    /// Integrates the current counts from the previous event time up to `now`.
    pub fn advance(&mut self, now: f64) {
        let from = self.last_time.max(self.window_start);
        let to = now.min(self.window_end);
        if to > from {
            let dt = to - from;
            self.live_area += self.live as f64 * dt;
            self.busy_area += self.busy as f64 * dt;
            self.idle_area += (self.live - self.busy) as f64 * dt;
            if self.time_at_count.len() <= self.live {
                self.time_at_count.resize(self.live + 1, 0.0);
            }
            self.time_at_count[self.live] += dt;
        }
        if now > self.last_time {
            self.last_time = now;
        }
    }

    pub fn set_counts(&mut self, live: usize, busy: usize) {
        debug_assert!(busy <= live);
        self.live = live;
        self.busy = busy;
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.window_start && t <= self.window_end
    }

    pub fn record_arrival(&mut self, t: f64, outcome: ArrivalOutcome) {
        if !self.in_window(t) {
            return;
        }
        match outcome {
            ArrivalOutcome::Cold => self.cold += 1,
            ArrivalOutcome::Warm => self.warm += 1,
            ArrivalOutcome::Rejected => self.rejected += 1,
        }
    }

    pub fn record_termination(&mut self, t: f64, lifespan: f64) {
        if self.in_window(t) {
            self.lifespan_sum += lifespan;
            self.lifespan_n += 1;
        }
    }

    pub fn finish(mut self) -> SimReport {
        let end = self.window_end;
        self.advance(end);
        let span = self.window_end - self.window_start;
        let total = self.cold + self.warm + self.rejected;
        let ratio = |num: u64| if total == 0 { 0.0 } else { num as f64 / total as f64 };
        let avg_server_count = self.live_area / span;
        let avg_running_count = self.busy_area / span;
        let avg_idle_count = self.idle_area / span;
        let (avg_utilization, avg_wasted_capacity) = if avg_server_count > 0.0 {
            (
                avg_running_count / avg_server_count,
                avg_idle_count / avg_server_count,
            )
        } else {
            (0.0, 0.0)
        };
        let instance_count_histogram = self
            .time_at_count
            .iter()
            .enumerate()
            .filter(|(_, dt)| **dt > 0.0)
            .map(|(k, dt)| (k, dt / span))
            .collect();
        SimReport {
            cold_start_probability: ratio(self.cold),
            rejection_probability: ratio(self.rejected),
            avg_server_count,
            avg_running_count,
            avg_idle_count,
            avg_lifespan: (self.lifespan_n > 0).then(|| self.lifespan_sum / self.lifespan_n as f64),
            instance_count_histogram,
            requests_total: total,
            requests_cold: self.cold,
            requests_warm: self.warm,
            requests_rejected: self.rejected,
            avg_utilization,
            avg_wasted_capacity,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_window_is_all_zero_count() {
        let report = Accumulator::new(0.0, 100.0).finish();
        assert_eq!(report.instance_count_histogram, BTreeMap::from([(0, 1.0)]));
        assert_eq!(report.avg_server_count, 0.0);
        assert_eq!(report.cold_start_probability, 0.0);
        assert_eq!(report.avg_lifespan, None);
    }

    #[test]
    fn warm_up_is_clipped() {
        let mut acc = Accumulator::new(10.0, 20.0);
        acc.set_counts(2, 1);
        acc.record_arrival(5.0, ArrivalOutcome::Cold);
        acc.advance(15.0);
        acc.set_counts(1, 0);
        acc.record_arrival(15.0, ArrivalOutcome::Warm);
        let r = acc.finish();
        assert_eq!(r.requests_total, 1);
        assert_eq!(r.requests_warm, 1);
        // 5 s at 2 instances, 5 s at 1
        assert!((r.avg_server_count - 1.5).abs() < 1e-12);
        assert!((r.avg_running_count - 0.5).abs() < 1e-12);
        assert!((r.avg_idle_count - 1.0).abs() < 1e-12);
        assert_eq!(r.instance_count_histogram, BTreeMap::from([(1, 0.5), (2, 0.5)]));
    }
}
