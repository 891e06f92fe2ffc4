use faas_sim::trace::{
    empirical_metrics, estimate_parameters, read_requests_csv, records_from_trace, write_requests_csv,
};
use faas_sim::{run_traced, EventTrace, SimConfig};

fn config(threshold: f64) -> SimConfig {
    SimConfig {
        horizon: 200_000.0,
        skip_initial: 0.0,
        seed: 31,
        ..SimConfig::exponential(0.9, 1.991, 2.244, threshold)
    }
}

#[test]
fn estimates_recover_configured_means() {
    let (report, trace) = run_traced(&config(5.0)).unwrap();
    let records = records_from_trace(&trace).unwrap();
    assert_eq!(records.len() as u64, report.requests_total);
    let est = estimate_parameters(&records).unwrap();
    assert_eq!(est.cold_count as u64, report.requests_cold);
    assert!((est.warm_mean / 1.991 - 1.0).abs() < 0.02, "{}", est.warm_mean);
    assert!((est.cold_mean / 2.244 - 1.0).abs() < 0.02, "{}", est.cold_mean);
    assert!((est.arrival_rate / 0.9 - 1.0).abs() < 0.02, "{}", est.arrival_rate);
}

#[test]
fn empirical_metrics_agree_with_report() {
    let (report, trace) = run_traced(&config(600.0)).unwrap();
    let records = records_from_trace(&trace).unwrap();
    let m = empirical_metrics(&records, 600.0, 10.0).unwrap();
    assert_eq!(m.cold_start_probability, report.cold_start_probability);
    assert!((m.mean_warm_pool / report.avg_server_count - 1.0).abs() < 0.03);
    assert!((m.mean_running / report.avg_running_count - 1.0).abs() < 0.05);
    assert!((0.0..=1.0).contains(&m.wasted_capacity));
}

#[test]
fn files_survive_the_round_trip() {
    let mut cfg = config(60.0);
    cfg.horizon = 5_000.0;
    let (_, trace) = run_traced(&cfg).unwrap();

    let mut events = Vec::new();
    trace.write_csv(&mut events).unwrap();
    let reread = EventTrace::read_csv(&events[..]).unwrap();
    assert_eq!(reread, trace);

    let records = records_from_trace(&reread).unwrap();
    let mut requests = Vec::new();
    write_requests_csv(&records, &mut requests).unwrap();
    assert_eq!(read_requests_csv(&requests[..]).unwrap(), records);
}
