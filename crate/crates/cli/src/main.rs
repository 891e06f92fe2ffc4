mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use faas_sim::analysis::{estimate_cost, sweep, write_sweep_csv, CostEstimate};
use faas_sim::exec::Execution;
use faas_sim::parsim::{run_par, run_par_traced};
use faas_sim::temporal::{run_ensemble, run_transient, run_transient_traced, InitialState};
use faas_sim::trace::{
    empirical_metrics, estimate_parameters, read_requests_csv, records_from_trace, EmpiricalMetrics,
    ParameterEstimate, DEFAULT_SAMPLE_STEP, DEFAULT_WINDOW,
};
use faas_sim::{EventTrace, SimError, SimReport};
use serde::Serialize;

use config::ConfigFile;

#[derive(Parser, Debug)]
#[command(name = "faas-sim", version, about = "Scale-per-request serverless platform simulator")]
struct Cli {
    /// Seed for the run (overrides simulation.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum worker threads for replications.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the event trace CSV here (run, transient).
    #[arg(long, global = true)]
    emit_trace: Option<PathBuf>,
    /// Requests one instance may serve at once (overrides platform.concurrency_value).
    #[arg(long, global = true)]
    concurrency_value: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady-state metrics as JSON.
    Run { config: PathBuf },
    /// Instance-count series from an initial state, as CSV. With
    /// simulation.replications >= 2, an ensemble mean with 95% intervals.
    Transient { config: PathBuf },
    /// Parameter grid from the [sweep] section, as CSV.
    Sweep { config: PathBuf },
    /// Steady-state run plus developer and provider cost rates, as JSON.
    Cost { config: PathBuf },
    /// Metrics and parameter estimates from a request log or event trace CSV.
    TraceMetrics {
        log: PathBuf,
        /// Idle window for counting an instance as live, in seconds.
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        /// Sampling step in seconds.
        #[arg(long, default_value_t = DEFAULT_SAMPLE_STEP)]
        step: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Transient { .. } => "transient",
            Command::Sweep { .. } => "sweep",
            Command::Cost { .. } => "cost",
            Command::TraceMetrics { .. } => "trace-metrics",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config { .. } | SimError::TraceFormat(_) => Failure::Input(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn emit(out: Option<&Path>, bytes: &[u8]) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| Failure::Internal(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            match stdout.write_all(bytes).and_then(|_| stdout.flush()) {
                // reader went away, e.g. `| head`
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
    }
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    text.into_bytes()
}

fn write_trace(path: &Path, trace: &EventTrace) -> Outcome {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    emit(Some(path), &buf)
}

fn load(path: &Path) -> Result<ConfigFile, Failure> {
    Ok(ConfigFile::load(path)?)
}

fn simulate(cli: &Cli, cfg: &ConfigFile) -> Result<SimReport, Failure> {
    let par = cfg.par_config(cli.seed, cli.concurrency_value);
    Ok(match (&cli.emit_trace, par.concurrency_value) {
        (Some(path), _) => {
            let (report, trace) = run_par_traced(&par)?;
            write_trace(path, &trace)?;
            report
        }
        (None, 1) => faas_sim::run(&par.base)?,
        (None, _) => run_par(&par)?,
    })
}

fn cmd_run(cli: &Cli, path: &Path) -> Outcome {
    let cfg = load(path)?;
    let report = simulate(cli, &cfg)?;
    emit(cli.out.as_deref(), &json(&report))
}

fn cmd_transient(cli: &Cli, exec: Execution, path: &Path) -> Outcome {
    let cfg = load(path)?;
    let par = cfg.par_config(cli.seed, cli.concurrency_value);
    if par.concurrency_value != 1 {
        return Err(SimError::config(
            "platform.concurrency_value",
            "transient analysis supports a concurrency value of 1 only",
        )
        .into());
    }
    let sim = par.base;
    let init = cfg.initial_state.clone().unwrap_or_else(InitialState::empty);
    let horizon = sim.horizon;
    let mut buf = Vec::new();
    if cfg.simulation.replications >= 2 {
        if cli.emit_trace.is_some() {
            return Err(Failure::Input("--emit-trace needs simulation.replications = 1".into()));
        }
        let step = cfg.simulation.grid_step.unwrap_or(10.0);
        let curve = run_ensemble(&sim, &init, horizon, cfg.simulation.replications, step, exec)?;
        curve.write_csv(&mut buf)?;
    } else {
        let run = match &cli.emit_trace {
            Some(trace_path) => {
                let (run, trace) = run_transient_traced(&sim, &init, horizon)?;
                write_trace(trace_path, &trace)?;
                run
            }
            None => run_transient(&sim, &init, horizon)?,
        };
        writeln!(buf, "t,instance_count,running_count")?;
        for p in &run.series {
            writeln!(buf, "{},{},{}", p.t, p.instance_count, p.running_count)?;
        }
    }
    emit(cli.out.as_deref(), &buf)
}

fn cmd_sweep(cli: &Cli, exec: Execution, path: &Path) -> Outcome {
    let cfg = load(path)?;
    let spec = cfg.sweep_spec(cli.seed, cli.concurrency_value)?;
    let rows = sweep(&spec, exec)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf)?;
    emit(cli.out.as_deref(), &buf)
}

#[derive(Serialize)]
struct CostOutput {
    arrival_rate: f64,
    warm_mean: f64,
    cold_mean: f64,
    #[serde(flatten)]
    estimate: CostEstimate,
    report: SimReport,
}

fn cmd_cost(cli: &Cli, path: &Path) -> Outcome {
    let cfg = load(path)?;
    let prices = cfg
        .cost
        .clone()
        .ok_or_else(|| SimError::config("cost", "section required by the cost command"))?;
    prices.validate()?;
    let report = simulate(cli, &cfg)?;
    let sim = cfg.sim_config(cli.seed);
    let arrival_rate = sim.arrival_rate();
    let warm_mean = sim.warm_service.mean().value;
    let cold_mean = sim.cold_service.mean().value;
    let estimate = estimate_cost(&report, arrival_rate, warm_mean, cold_mean, &prices);
    emit(
        cli.out.as_deref(),
        &json(&CostOutput {
            arrival_rate,
            warm_mean,
            cold_mean,
            estimate,
            report,
        }),
    )
}

#[derive(Serialize)]
struct TraceOutput {
    requests: usize,
    empirical: EmpiricalMetrics,
    estimate: Option<ParameterEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate_error: Option<String>,
}

fn cmd_trace_metrics(cli: &Cli, path: &Path, window: f64, step: f64) -> Outcome {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let header = text.lines().next().unwrap_or_default().trim();
    let records = if header == faas_sim::engine::TRACE_HEADER {
        records_from_trace(&EventTrace::read_csv(text.as_bytes())?)?
    } else {
        read_requests_csv(text.as_bytes())?
    };
    let empirical = empirical_metrics(&records, window, step)?;
    let (estimate, estimate_error) = match estimate_parameters(&records) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e.to_string())),
    };
    emit(
        cli.out.as_deref(),
        &json(&TraceOutput {
            requests: records.len(),
            empirical,
            estimate,
            estimate_error,
        }),
    )
}

fn dispatch(cli: &Cli) -> Outcome {
    let exec = Execution::with_jobs(cli.jobs);
    match &cli.command {
        Command::Run { config } => cmd_run(cli, config),
        Command::Transient { config } => cmd_transient(cli, exec, config),
        Command::Sweep { config } => cmd_sweep(cli, exec, config),
        Command::Cost { config } => cmd_cost(cli, config),
        Command::TraceMetrics { log, window, step } => cmd_trace_metrics(cli, log, *window, *step),
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    started_unix_seconds: f64,
    wall_clock_seconds: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or_default();
    let clock = Instant::now();
    let outcome = dispatch(&cli);
    let meta = Meta {
        command: cli.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
    };
    eprintln!(
        "{}",
        serde_json::json!({ "meta": meta })
    );
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
