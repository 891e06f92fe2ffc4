//! Transient analysis from a custom warm pool, and replication ensembles.
//!
//! A transient run starts at t = 0 with the instances described by an
//! [`InitialState`] and measures over `[0, horizon]`. Pre-existing instances
//! get creation times equal to their (non-positive) offsets, so newest-first
//! routing among them follows those offsets, ties broken by list order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::{EventTrace, Observer, SimConfig, Simulation};
use crate::error::{Result, SimError};
use crate::exec::Execution;
use crate::instance::{ExpirationPolicy, FunctionInstance};
use crate::metrics::{ArrivalOutcome, SimReport};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotState {
    Idle,
    Busy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSnapshot {
    pub state: SnapshotState,
    /// Creation time relative to the start of the run; ≤ 0.
    pub creation_time_offset: f64,
    /// How long the instance has been in its current state; ≥ 0.
    pub time_in_state: f64,
    /// Time until the in-flight request completes; busy instances only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_busy: Option<f64>,
}

impl InstanceSnapshot {
    pub fn idle(creation_time_offset: f64, time_in_state: f64) -> Self {
        InstanceSnapshot {
            state: SnapshotState::Idle,
            creation_time_offset,
            time_in_state,
            remaining_busy: None,
        }
    }

    pub fn busy(creation_time_offset: f64, time_in_state: f64, remaining_busy: f64) -> Self {
        InstanceSnapshot {
            state: SnapshotState::Busy,
            creation_time_offset,
            time_in_state,
            remaining_busy: Some(remaining_busy),
        }
    }
}

/// Warm pool at the start of a transient run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    #[serde(default)]
    pub instances: Vec<InstanceSnapshot>,
}

impl InitialState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn validate(&self, policy: &ExpirationPolicy) -> Result<()> {
        for (i, s) in self.instances.iter().enumerate() {
            let field = |name: &str| format!("initial_state.instances[{i}].{name}");
            if !(s.creation_time_offset.is_finite() && s.creation_time_offset <= 0.0) {
                return Err(SimError::config(field("creation_time_offset"), "must be <= 0"));
            }
            if !(s.time_in_state.is_finite() && s.time_in_state >= 0.0) {
                return Err(SimError::config(field("time_in_state"), "must be >= 0"));
            }
            if -s.time_in_state < s.creation_time_offset {
                return Err(SimError::config(
                    field("time_in_state"),
                    "exceeds the instance's age (-creation_time_offset)",
                ));
            }
            match s.state {
                SnapshotState::Idle => {
                    if s.remaining_busy.is_some() {
                        return Err(SimError::config(
                            field("remaining_busy"),
                            "only valid for busy instances",
                        ));
                    }
                    if let ExpirationPolicy::Fixed(threshold) = policy {
                        if s.time_in_state >= *threshold {
                            return Err(SimError::config(
                                field("time_in_state"),
                                format!("idle instance would already have expired (threshold {threshold})"),
                            ));
                        }
                    }
                }
                SnapshotState::Busy => match s.remaining_busy {
                    Some(r) if r.is_finite() && r > 0.0 => {}
                    _ => {
                        return Err(SimError::config(
                            field("remaining_busy"),
                            "busy instances need remaining_busy > 0",
                        ))
                    }
                },
            }
        }
        Ok(())
    }
}

/// Live and busy instance counts from `t` until the next point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub instance_count: usize,
    pub running_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientRun {
    pub report: SimReport,
    /// Piecewise-constant step function, one point per change.
    pub series: Vec<SeriesPoint>,
}

#[derive(Default)]
struct StepRecorder {
    points: Vec<SeriesPoint>,
}

impl Observer for StepRecorder {
    fn on_state(&mut self, t: f64, live: usize, busy: usize) {
        let point = SeriesPoint {
            t,
            instance_count: live,
            running_count: busy,
        };
        match self.points.last_mut() {
            Some(last) if last.instance_count == live && last.running_count == busy => {}
            Some(last) if last.t == t => *last = point,
            _ => self.points.push(point),
        }
    }
}

fn simulate<O: Observer>(
    config: &SimConfig,
    init: &InitialState,
    horizon: f64,
    keep_trace: bool,
    observer: &mut O,
) -> Result<(SimReport, Option<EventTrace>)> {
    let effective = SimConfig {
        horizon,
        skip_initial: 0.0,
        ..config.clone()
    };
    effective.validate()?;
    init.validate(&effective.expiration_threshold)?;

    let mut sim = Simulation::new(&effective, horizon, 0.0, keep_trace);
    let mut order: Vec<usize> = (0..init.instances.len()).collect();
    order.sort_by(|a, b| {
        init.instances[*a]
            .creation_time_offset
            .total_cmp(&init.instances[*b].creation_time_offset)
    });
    for (id, idx) in order.into_iter().enumerate() {
        let s = &init.instances[idx];
        let threshold = effective.expiration_threshold.draw(sim.rng());
        let inst = match s.state {
            SnapshotState::Idle => FunctionInstance::restored_idle(
                id as u64,
                s.creation_time_offset,
                -s.time_in_state,
                threshold,
            ),
            SnapshotState::Busy => FunctionInstance::restored_busy(
                id as u64,
                s.creation_time_offset,
                s.remaining_busy.expect("validated"),
                threshold,
            ),
        };
        sim.restore(inst);
    }
    sim.run(observer)
}

/// Runs from `init` to `horizon`; the config's own horizon and warm-up are
/// ignored.
pub fn run_transient(config: &SimConfig, init: &InitialState, horizon: f64) -> Result<TransientRun> {
    let mut rec = StepRecorder::default();
    let (report, _) = simulate(config, init, horizon, false, &mut rec)?;
    Ok(TransientRun {
        report,
        series: rec.points,
    })
}

pub fn run_transient_traced(
    config: &SimConfig,
    init: &InitialState,
    horizon: f64,
) -> Result<(TransientRun, EventTrace)> {
    let mut rec = StepRecorder::default();
    let (report, trace) = simulate(config, init, horizon, true, &mut rec)?;
    Ok((
        TransientRun {
            report,
            series: rec.points,
        },
        trace.expect("trace requested"),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMetric {
    /// Live instances at the grid point.
    InstanceCount,
    /// Busy instances at the grid point.
    RunningCount,
    /// Time-averaged live instances over `[0, t]`.
    AvgInstanceCount,
    /// Time-averaged busy instances over `[0, t]`.
    AvgRunningCount,
    /// Cold fraction of arrivals in `(t - step, t]`. Runs without arrivals
    /// in the bucket are left out of that point.
    ColdStartProbability,
}

impl EnsembleMetric {
    pub const ALL: [EnsembleMetric; 5] = [
        EnsembleMetric::InstanceCount,
        EnsembleMetric::RunningCount,
        EnsembleMetric::AvgInstanceCount,
        EnsembleMetric::AvgRunningCount,
        EnsembleMetric::ColdStartProbability,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnsembleMetric::InstanceCount => "instance_count",
            EnsembleMetric::RunningCount => "running_count",
            EnsembleMetric::AvgInstanceCount => "avg_instance_count",
            EnsembleMetric::AvgRunningCount => "avg_running_count",
            EnsembleMetric::ColdStartProbability => "cold_start_probability",
        }
    }
}

impl fmt::Display for EnsembleMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean and 95% confidence half-width across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointStat {
    pub mean: f64,
    pub half_width: f64,
    /// Runs contributing to this point.
    pub n: usize,
}

impl PointStat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return PointStat {
                mean: f64::NAN,
                half_width: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let half_width = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z_95 * var.sqrt() / (n as f64).sqrt()
        };
        PointStat {
            mean,
            half_width,
            n,
        }
    }

    pub fn ci_low(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn ci_high(&self) -> f64 {
        self.mean + self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleCurve {
    pub times: Vec<f64>,
    pub n_runs: usize,
    pub series: BTreeMap<EnsembleMetric, Vec<PointStat>>,
}

impl EnsembleCurve {
    pub fn metric(&self, m: EnsembleMetric) -> &[PointStat] {
        &self.series[&m]
    }

    pub fn last(&self, m: EnsembleMetric) -> PointStat {
        *self.metric(m).last().expect("grid is never empty")
    }

    /// Writes `t,metric,mean,ci_low,ci_high`, time-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,metric,mean,ci_low,ci_high")?;
        for (i, t) in self.times.iter().enumerate() {
            for m in EnsembleMetric::ALL {
                let p = self.series[&m][i];
                writeln!(w, "{t},{m},{},{},{}", p.mean, p.ci_low(), p.ci_high())?;
            }
        }
        Ok(())
    }
}

/// Grid points `0, step, 2·step, …`, closed by `horizon`.
pub fn time_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if *grid.last().expect("n >= 0") < horizon {
        grid.push(horizon);
    }
    grid
}

/// Samples one run at the grid points using the state after the last event
/// at or before each point.
struct GridSampler<'g> {
    grid: &'g [f64],
    step: f64,
    next: usize,
    live: usize,
    busy: usize,
    last_t: f64,
    live_area: f64,
    busy_area: f64,
    samples: BTreeMap<EnsembleMetric, Vec<f64>>,
    cold: Vec<u64>,
    arrivals: Vec<u64>,
}

impl<'g> GridSampler<'g> {
    fn new(grid: &'g [f64], step: f64) -> Self {
        GridSampler {
            grid,
            step,
            next: 0,
            live: 0,
            busy: 0,
            last_t: 0.0,
            live_area: 0.0,
            busy_area: 0.0,
            samples: EnsembleMetric::ALL
                .iter()
                .map(|m| (*m, Vec::with_capacity(grid.len())))
                .collect(),
            cold: vec![0; grid.len()],
            arrivals: vec![0; grid.len()],
        }
    }

    fn emit_before(&mut self, t: f64, inclusive: bool) {
        while self.next < self.grid.len() {
            let g = self.grid[self.next];
            if g > t || (g == t && !inclusive) {
                break;
            }
            let live_area = self.live_area + self.live as f64 * (g - self.last_t);
            let busy_area = self.busy_area + self.busy as f64 * (g - self.last_t);
            let (avg_live, avg_busy) = if g > 0.0 {
                (live_area / g, busy_area / g)
            } else {
                (self.live as f64, self.busy as f64)
            };
            let s = &mut self.samples;
            s.get_mut(&EnsembleMetric::InstanceCount).unwrap().push(self.live as f64);
            s.get_mut(&EnsembleMetric::RunningCount).unwrap().push(self.busy as f64);
            s.get_mut(&EnsembleMetric::AvgInstanceCount).unwrap().push(avg_live);
            s.get_mut(&EnsembleMetric::AvgRunningCount).unwrap().push(avg_busy);
            self.next += 1;
        }
    }
}

impl Observer for GridSampler<'_> {
    fn on_arrival(&mut self, t: f64, outcome: ArrivalOutcome) {
        let bucket = ((t / self.step).ceil() as usize).min(self.grid.len() - 1);
        self.arrivals[bucket] += 1;
        if outcome == ArrivalOutcome::Cold {
            self.cold[bucket] += 1;
        }
    }

    fn on_state(&mut self, t: f64, live: usize, busy: usize) {
        self.emit_before(t, false);
        self.live_area += self.live as f64 * (t - self.last_t);
        self.busy_area += self.busy as f64 * (t - self.last_t);
        self.last_t = t;
        self.live = live;
        self.busy = busy;
    }

    fn finish(&mut self, horizon: f64) {
        self.emit_before(horizon, true);
    }
}

struct RunSamples {
    samples: BTreeMap<EnsembleMetric, Vec<f64>>,
    cold: Vec<u64>,
    arrivals: Vec<u64>,
}

/// Runs `n_runs` independent replications seeded `seed + run_index`.
pub fn run_ensemble(
    config: &SimConfig,
    init: &InitialState,
    horizon: f64,
    n_runs: usize,
    grid_step: f64,
    exec: Execution,
) -> Result<EnsembleCurve> {
    if n_runs < 2 {
        return Err(SimError::config(
            "simulation.replications",
            format!("an ensemble needs at least 2 runs, got {n_runs}"),
        ));
    }
    let seeds: Vec<u64> = (0..n_runs as u64)
        .map(|i| config.seed.wrapping_add(i))
        .collect();
    run_ensemble_with_seeds(config, init, horizon, &seeds, grid_step, exec)
}

/// Ensemble over explicit seeds (duplicates allowed).
pub fn run_ensemble_with_seeds(
    config: &SimConfig,
    init: &InitialState,
    horizon: f64,
    seeds: &[u64],
    grid_step: f64,
    exec: Execution,
) -> Result<EnsembleCurve> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(SimError::config("simulation.grid_step", "must be > 0"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::config("simulation.horizon", "must be > 0"));
    }
    let grid = time_grid(horizon, grid_step);
    let runs = exec.try_map(seeds, |seed| {
        let cfg = SimConfig {
            seed: *seed,
            ..config.clone()
        };
        let mut sampler = GridSampler::new(&grid, grid_step);
        simulate(&cfg, init, horizon, false, &mut sampler)?;
        Ok::<_, SimError>(RunSamples {
            samples: sampler.samples,
            cold: sampler.cold,
            arrivals: sampler.arrivals,
        })
    })?;

    let mut series = BTreeMap::new();
    for m in EnsembleMetric::ALL {
        let points = (0..grid.len())
            .map(|i| {
                let values: Vec<f64> = match m {
                    EnsembleMetric::ColdStartProbability => runs
                        .iter()
                        .filter(|r| r.arrivals[i] > 0)
                        .map(|r| r.cold[i] as f64 / r.arrivals[i] as f64)
                        .collect(),
                    _ => runs.iter().map(|r| r.samples[&m][i]).collect(),
                };
                PointStat::from_values(&values)
            })
            .collect();
        series.insert(m, points);
    }
    Ok(EnsembleCurve {
        times: grid,
        n_runs: seeds.len(),
        series,
    })
}
