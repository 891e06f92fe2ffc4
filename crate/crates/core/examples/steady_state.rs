//! Steady-state run of a Poisson workload on a 10-minute-threshold platform.
//!
//!     cargo run --release --example steady_state -- [arrival_rate] [seed]

use faas_sim::{run, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let rate: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.9);
    let mut config = SimConfig::exponential(rate, 1.991, 2.244, 600.0);
    if let Some(seed) = args.next() {
        config.seed = seed.parse()?;
    }
    let start = std::time::Instant::now();
    let report = run(&config)?;
    println!("{report:#?}");
    eprintln!("elapsed: {:?}", start.elapsed());
    Ok(())
}
