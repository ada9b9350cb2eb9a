//! CSV rows and run manifests.

use std::fs;
use std::path::Path;

use gprl::policy_sim::StepRecord;
use serde_json::{json, Map, Value};

use crate::error::CliError;

/// Fixed-width scientific notation with 15 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else {
        x.to_string()
    }
}

pub fn trajectory_header(k: usize) -> String {
    let mut cols = vec!["step".to_string(), "D".into(), "beta".into(), "engaged".into()];
    cols.extend((1..=k).map(|l| format!("m_{l}")));
    cols.extend((1..=k).map(|l| format!("alpha_{l}")));
    cols.push("exploit_mass".into());
    cols.extend((1..=k).map(|l| format!("mean_quality_{l}")));
    cols.push("kl_to_ref".into());
    cols.push("loss".into());
    cols.join(",")
}

pub fn trajectory_row(r: &StepRecord) -> String {
    let mut cols = vec![r.step.to_string(), fmt_f64(r.drift), fmt_f64(r.beta), u8::from(r.engaged).to_string()];
    cols.extend(r.multipliers.iter().map(|&x| fmt_f64(x)));
    cols.extend(r.alpha.iter().map(|&x| fmt_f64(x)));
    cols.push(fmt_f64(r.exploit_mass));
    cols.extend(r.mean_quality.iter().map(|&x| fmt_f64(x)));
    cols.push(fmt_f64(r.kl_to_ref));
    cols.push(fmt_f64(r.loss));
    cols.join(",")
}

pub fn trajectory_csv(k: usize, records: &[StepRecord]) -> String {
    let mut out = trajectory_header(k);
    out.push('\n');
    for r in records {
        out.push_str(&trajectory_row(r));
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Manifest JSON. Paths are relative to the run directory so that reruns in
/// a different place produce identical bytes.
pub fn manifest(command: &str, status: &str, seed: u64, config: &[(&str, String)], outputs: &[&str]) -> String {
    let mut cfg = Map::new();
    for (k, v) in config {
        cfg.insert((*k).to_string(), Value::String(v.clone()));
    }
    let doc = json!({
        "tool": "gprl",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "status": status,
        "seed": seed,
        "config": cfg,
        "outputs": outputs,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("manifest is valid JSON");
    s.push('\n');
    s
}
