use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{self, SimConfig};
use crate::error::{Result, SimError};
use crate::exec::Execution;
use crate::instance::ExpirationPolicy;
use crate::metrics::SimReport;
use crate::parsim::{self, ParConfig};
use crate::stochastic::ProcessSpec;
use crate::temporal::PointStat;

/// Upper bound on `grid points × replications` unless overridden.
pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// Configuration parameter a sweep axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParam {
    ArrivalRate,
    ExpirationThreshold,
    MaxConcurrency,
    ConcurrencyValue,
}

impl SweepParam {
    pub fn path(&self) -> &'static str {
        match self {
            SweepParam::ArrivalRate => "workload.arrival.rate",
            SweepParam::ExpirationThreshold => "platform.expiration_threshold",
            SweepParam::MaxConcurrency => "platform.max_concurrency",
            SweepParam::ConcurrencyValue => "platform.concurrency_value",
        }
    }

    fn apply(&self, config: &mut ParConfig, value: f64) -> Result<()> {
        let bad = |why: &str| SimError::config(self.path(), format!("{why}, got {value}"));
        let positive_integer = |v: f64| v >= 1.0 && v.fract() == 0.0;
        match self {
            SweepParam::ArrivalRate => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(bad("arrival rate must be > 0"));
                }
                config.base.arrival = match config.base.arrival {
                    ProcessSpec::Exponential { .. } => ProcessSpec::Exponential { rate: value },
                    ProcessSpec::Deterministic { .. } => ProcessSpec::Deterministic { value: 1.0 / value },
                    _ => {
                        return Err(SimError::config(
                            self.path(),
                            "only exponential and deterministic arrivals can be swept by rate",
                        ))
                    }
                };
            }
            SweepParam::ExpirationThreshold => {
                config.base.expiration_threshold = ExpirationPolicy::Fixed(value);
            }
            SweepParam::MaxConcurrency => {
                config.base.max_concurrency = if value == f64::INFINITY {
                    None
                } else if positive_integer(value) {
                    Some(value as u64)
                } else {
                    return Err(bad("must be a positive integer or inf"));
                };
            }
            SweepParam::ConcurrencyValue => {
                if !(positive_integer(value) && value <= u32::MAX as f64) {
                    return Err(bad("must be a positive integer"));
                }
                config.concurrency_value = value as u32;
            }
        }
        Ok(())
    }
}

impl FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "workload.arrival.rate" | "arrival_rate" => SweepParam::ArrivalRate,
            "platform.expiration_threshold" | "expiration_threshold" => SweepParam::ExpirationThreshold,
            "platform.max_concurrency" | "max_concurrency" => SweepParam::MaxConcurrency,
            "platform.concurrency_value" | "concurrency_value" => SweepParam::ConcurrencyValue,
            other => {
                return Err(SimError::config(
                    "sweep.axes.path",
                    format!("unknown sweep parameter `{other}`"),
                ))
            }
        })
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<f64>,
}

impl SweepAxis {
    pub fn new(param: SweepParam, values: impl Into<Vec<f64>>) -> Self {
        SweepAxis {
            path: param.path().to_string(),
            values: values.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: SimConfig,
    pub concurrency_value: u32,
    pub axes: Vec<SweepAxis>,
    pub replications: usize,
    pub max_runs: usize,
    /// Reuse the same seeds at every grid point so that points differ only
    /// by configuration.
    pub common_random_numbers: bool,
}

impl SweepSpec {
    pub fn new(base: SimConfig, axes: Vec<SweepAxis>, replications: usize) -> Self {
        SweepSpec {
            base,
            concurrency_value: 1,
            axes,
            replications,
            max_runs: DEFAULT_MAX_RUNS,
            common_random_numbers: false,
        }
    }

    fn seed(&self, point: usize, replica: usize) -> u64 {
        let offset = if self.common_random_numbers {
            replica
        } else {
            point * self.replications + replica
        };
        self.base.seed.wrapping_add(offset as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    ColdStartProbability,
    RejectionProbability,
    AvgServerCount,
    AvgRunningCount,
    AvgIdleCount,
    AvgLifespan,
    AvgWastedCapacity,
}

impl SweepMetric {
    pub const ALL: [SweepMetric; 7] = [
        SweepMetric::ColdStartProbability,
        SweepMetric::RejectionProbability,
        SweepMetric::AvgServerCount,
        SweepMetric::AvgRunningCount,
        SweepMetric::AvgIdleCount,
        SweepMetric::AvgLifespan,
        SweepMetric::AvgWastedCapacity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepMetric::ColdStartProbability => "cold_start_probability",
            SweepMetric::RejectionProbability => "rejection_probability",
            SweepMetric::AvgServerCount => "avg_server_count",
            SweepMetric::AvgRunningCount => "avg_running_count",
            SweepMetric::AvgIdleCount => "avg_idle_count",
            SweepMetric::AvgLifespan => "avg_lifespan",
            SweepMetric::AvgWastedCapacity => "avg_wasted_capacity",
        }
    }

    fn extract(&self, r: &SimReport) -> Option<f64> {
        Some(match self {
            SweepMetric::ColdStartProbability => r.cold_start_probability,
            SweepMetric::RejectionProbability => r.rejection_probability,
            SweepMetric::AvgServerCount => r.avg_server_count,
            SweepMetric::AvgRunningCount => r.avg_running_count,
            SweepMetric::AvgIdleCount => r.avg_idle_count,
            SweepMetric::AvgLifespan => return r.avg_lifespan,
            SweepMetric::AvgWastedCapacity => r.avg_wasted_capacity,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    /// Axis values at this grid point, in axis order.
    pub point: Vec<(String, f64)>,
    pub metrics: BTreeMap<SweepMetric, PointStat>,
    /// Per-replication reports, in replica order.
    #[serde(skip)]
    pub reports: Vec<SimReport>,
}

impl SweepRow {
    pub fn mean(&self, m: SweepMetric) -> f64 {
        self.metrics[&m].mean
    }
}

struct GridPoint {
    values: Vec<(String, f64)>,
    config: ParConfig,
}

fn expand(spec: &SweepSpec) -> Result<Vec<GridPoint>> {
    let mut params = Vec::with_capacity(spec.axes.len());
    for axis in &spec.axes {
        let p: SweepParam = axis.path.parse()?;
        if params.contains(&p) {
            return Err(SimError::config(
                "sweep.axes.path",
                format!("`{}` appears more than once", p.path()),
            ));
        }
        if axis.values.is_empty() {
            return Err(SimError::config(
                format!("sweep.axes[{}].values", p.path()),
                "no values",
            ));
        }
        params.push(p);
    }

    let base = ParConfig::new(spec.base.clone(), spec.concurrency_value);
    let mut points = vec![GridPoint {
        values: Vec::new(),
        config: base,
    }];
    // cartesian product, last axis varying fastest
    for (param, axis) in params.iter().zip(&spec.axes) {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for point in &points {
            for &v in &axis.values {
                let mut config = point.config.clone();
                param.apply(&mut config, v)?;
                let mut values = point.values.clone();
                values.push((param.path().to_string(), v));
                next.push(GridPoint { values, config });
            }
        }
        points = next;
    }
    Ok(points)
}

/// Runs every grid point `replications` times and summarizes each point
/// with the across-replication mean and 95% confidence half-width.
///
/// Seeds are `base + point × replications + replica`, or `base + replica`
/// with common random numbers.
pub fn sweep(spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>> {
    if spec.replications == 0 {
        return Err(SimError::config("simulation.replications", "must be >= 1"));
    }
    let points = expand(spec)?;
    let runs = points.len().saturating_mul(spec.replications);
    if runs > spec.max_runs {
        return Err(SimError::config(
            "sweep.max_runs",
            format!(
                "{} grid points × {} replications = {runs} runs exceeds the budget of {}",
                points.len(),
                spec.replications,
                spec.max_runs
            ),
        ));
    }
    for p in &points {
        p.config.validate()?;
    }

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.replications).map(move |r| (p, r)))
        .collect();
    let reports = exec.try_map(&jobs, |&(p, r)| {
        let mut config = points[p].config.clone();
        config.base.seed = spec.seed(p, r);
        if config.concurrency_value == 1 {
            engine::run(&config.base)
        } else {
            parsim::run_par(&config)
        }
    })?;

    Ok(points
        .into_iter()
        .zip(reports.chunks(spec.replications))
        .enumerate()
        .map(|(index, (point, reports))| {
            let metrics = SweepMetric::ALL
                .iter()
                .map(|m| {
                    let values: Vec<f64> = reports.iter().filter_map(|r| m.extract(r)).collect();
                    (*m, PointStat::from_values(&values))
                })
                .collect();
            SweepRow {
                index,
                point: point.values,
                metrics,
                reports: reports.to_vec(),
            }
        })
        .collect())
}

/// One column per axis and per metric, plus a `ci_<metric>` half-width
/// column for each metric.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    let mut header: Vec<String> = rows
        .first()
        .map(|r| r.point.iter().map(|(p, _)| p.clone()).collect())
        .unwrap_or_default();
    header.push("replications".into());
    for m in SweepMetric::ALL {
        header.push(m.as_str().into());
    }
    for m in SweepMetric::ALL {
        header.push(format!("ci_{}", m.as_str()));
    }
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let mut cells: Vec<String> = row.point.iter().map(|(_, v)| v.to_string()).collect();
        cells.push(row.reports.len().to_string());
        for m in SweepMetric::ALL {
            cells.push(row.metrics[&m].mean.to_string());
        }
        for m in SweepMetric::ALL {
            cells.push(row.metrics[&m].half_width.to_string());
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
