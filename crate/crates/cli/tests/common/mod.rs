#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write(dir: &Path, file: &str, text: &str) -> PathBuf {
    let path = dir.join(file);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn faas_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_faas-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

pub fn workload(rate: f64, threshold: f64, horizon: f64) -> String {
    format!(
        r#"[workload]
arrival = {{ kind = "exponential", params = {{ rate = {rate} }} }}
warm_service = {{ kind = "exponential", params = {{ rate = 0.5022601707684581 }} }}
cold_service = {{ kind = "exponential", params = {{ rate = 0.4456327985739750 }} }}

[platform]
expiration_threshold = {threshold}

[simulation]
horizon = {horizon}
skip_initial = 100
"#
    )
}
