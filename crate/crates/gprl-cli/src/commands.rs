use std::fs;
use std::path::{Path, PathBuf};

use gprl::advantage::{aggregate_advantage, normalize_per_dimension, population_scores};
use gprl::oracle::{run_suite, Fault};
use gprl::policy_sim::{run_scenario, terminal_drift, ScenarioConfig, StepRecord};
use gprl::preference_core::{score_tensor, PreferenceEmbedding};
use gprl::GprlError;

use crate::config::{self, ParsedConfig};
use crate::error::CliError;
use crate::output::{fmt_f64, manifest, trajectory_csv, write};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn mkdir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ParsedConfig, CliError> {
    let mut parsed = config::parse(&read(path)?)?;
    if let Some(s) = seed {
        parsed.config.seed = s;
    }
    Ok(parsed)
}

/// Map a config validation failure back to the line that set the field.
fn config_error(parsed: &ParsedConfig, err: GprlError) -> CliError {
    match err {
        GprlError::InvalidConfig { field, reason } => match parsed.line_of(field) {
            Some(line) => CliError::Parse { line, message: format!("`{field}` {reason}") },
            None => CliError::Usage(format!("`{field}` {reason}")),
        },
        other => CliError::Runtime(other.to_string()),
    }
}

/// Run one scenario into `out`, writing the manifest before and after.
fn run_into(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<StepRecord>, CliError> {
    mkdir(out)?;
    let echo = config::render(cfg);
    let files = ["trajectory.csv"];
    let manifest_path = out.join("manifest.json");
    write(&manifest_path, &manifest("scenario", "running", cfg.seed, &echo, &files))?;
    let records = run_scenario(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    write(&out.join("trajectory.csv"), &trajectory_csv(cfg.k, &records))?;
    write(&manifest_path, &manifest("scenario", "complete", cfg.seed, &echo, &files))?;
    Ok(records)
}

pub fn scenario(config_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let parsed = load_config(config_path, seed)?;
    parsed.config.validate().map_err(|e| config_error(&parsed, e))?;
    let records = run_into(&parsed.config, out)?;
    let max_d = records.iter().map(|r| r.drift).fold(0.0, f64::max);
    eprintln!(
        "{} steps, max D {:.4}, final exploit mass {:.4}",
        records.len(),
        max_d,
        records.last().map_or(0.0, |r| r.exploit_mass)
    );
    Ok(())
}

/// Split `key=v1,v2,...`.
pub fn parse_sweep(spec: &str) -> Result<(String, Vec<String>), CliError> {
    let (key, values) =
        spec.split_once('=').ok_or_else(|| CliError::Usage(format!("--sweep expects key=v1,v2,..., got `{spec}`")))?;
    let key = key.trim();
    if !config::KEYS.contains(&key) {
        return Err(CliError::Usage(format!("cannot sweep unknown key `{key}`")));
    }
    let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(CliError::Usage("--sweep needs at least one value".into()));
    }
    Ok((key.to_string(), values))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

pub fn sweep(config_path: &Path, spec: &str, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let parsed = load_config(config_path, seed)?;
    let (key, values) = parse_sweep(spec)?;
    let mut configs = Vec::with_capacity(values.len());
    for v in &values {
        let mut cfg = parsed.config.clone();
        config::apply(&mut cfg, &key, v).map_err(|m| CliError::Usage(format!("--sweep {key}={v}: {m}")))?;
        cfg.validate().map_err(|e| CliError::Usage(format!("--sweep {key}={v}: {e}")))?;
        configs.push(cfg);
    }
    mkdir(out)?;
    let mut rows = vec!["key,value,run_dir,final_D,max_D,terminal_D,final_exploit_mass,mean_aggregate_advantage".to_string()];
    let mut dirs = Vec::new();
    for (v, cfg) in values.iter().zip(&configs) {
        let dir: PathBuf = [format!("{key}={v}")].iter().collect();
        let records = run_into(cfg, &out.join(&dir))?;
        let last = records.last().expect("steps >= 1");
        rows.push(format!(
            "{key},{v},{},{},{},{},{},{}",
            dir.display(),
            fmt_f64(last.drift),
            fmt_f64(records.iter().map(|r| r.drift).fold(0.0, f64::max)),
            fmt_f64(terminal_drift(&records)),
            fmt_f64(last.exploit_mass),
            fmt_f64(mean(records.iter().map(|r| r.mean_aggregate_advantage))),
        ));
        dirs.push(dir.display().to_string());
    }
    write(&out.join("summary.csv"), &(rows.join("\n") + "\n"))?;
    let mut echo = config::render(&parsed.config);
    echo.push(("sweep", format!("{key}={}", values.join(","))));
    let mut outputs: Vec<&str> = vec!["summary.csv"];
    outputs.extend(dirs.iter().map(String::as_str));
    write(&out.join("manifest.json"), &manifest("sweep", "complete", parsed.config.seed, &echo, &outputs))?;
    eprintln!("{} runs written to {}", values.len(), out.display());
    Ok(())
}

/// Parse an embedding file: a `# k=<int>` header, then `id,v1,...,v2k` rows.
pub fn parse_embeddings(text: &str) -> Result<(usize, Vec<(String, PreferenceEmbedding)>), CliError> {
    let mut k = None;
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if k.is_none() {
                let v = rest.trim().strip_prefix("k=").ok_or_else(|| CliError::Parse {
                    line: line_no,
                    message: "expected header `# k=<int>`".into(),
                })?;
                let parsed: usize = v.trim().parse().map_err(|_| CliError::Parse {
                    line: line_no,
                    message: format!("bad subspace count `{}`", v.trim()),
                })?;
                if parsed == 0 {
                    return Err(CliError::Parse { line: line_no, message: "k must be positive".into() });
                }
                k = Some(parsed);
            }
            continue;
        }
        let k = k.ok_or_else(|| CliError::Parse { line: line_no, message: "missing `# k=<int>` header".into() })?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 2 * k + 1 {
            return Err(CliError::Parse {
                line: line_no,
                message: format!("expected {} fields, got {}", 2 * k + 1, fields.len()),
            });
        }
        let comps = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| CliError::Parse { line: line_no, message: "non-numeric component".into() })?;
        let emb = PreferenceEmbedding::new(comps).map_err(|e| CliError::Parse { line: line_no, message: e.to_string() })?;
        rows.push((fields[0].to_string(), emb));
    }
    let k = k.ok_or_else(|| CliError::Parse { line: 1, message: "missing `# k=<int>` header".into() })?;
    Ok((k, rows))
}

pub fn parse_weights(spec: &str) -> Result<Vec<f64>, CliError> {
    spec.split(',')
        .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Usage(format!("--weights expects comma-separated reals, got `{spec}`")))
}

/// Advantage table for one embedding file treated as a single group.
pub fn score_table(text: &str, weights: Option<&[f64]>, epsilon: f64) -> Result<(String, Vec<f64>), CliError> {
    let (k, rows) = parse_embeddings(text)?;
    if rows.len() < 2 {
        return Err(CliError::Usage(format!("need at least 2 embeddings, got {}", rows.len())));
    }
    let w = weights.map_or_else(|| vec![1.0; k], <[f64]>::to_vec);
    if w.len() != k {
        return Err(CliError::Usage(format!("--weights needs {k} values, got {}", w.len())));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(CliError::Usage("--epsilon must be finite and nonnegative".into()));
    }
    let group: Vec<PreferenceEmbedding> = rows.iter().map(|(_, e)| e.clone()).collect();
    let run = || -> gprl::Result<_> {
        let s_hat = population_scores(&score_tensor(&group)?)?;
        let prof = aggregate_advantage(&normalize_per_dimension(&s_hat, epsilon)?, &w)?;
        Ok((s_hat, prof))
    };
    let (s_hat, prof) = run().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut header = vec!["id".to_string()];
    header.extend((1..=k).map(|l| format!("s_hat_{l}")));
    header.extend((1..=k).map(|l| format!("A_{l}")));
    header.push("A_aggregate".into());
    let mut out = header.join(",") + "\n";
    for (i, (id, _)) in rows.iter().enumerate() {
        let mut cols = vec![id.clone()];
        cols.extend((0..k).map(|l| fmt_f64(s_hat.get(i, l))));
        cols.extend((0..k).map(|l| fmt_f64(prof.get(i, l))));
        cols.push(fmt_f64(prof.aggregate[i]));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    let mut sums: Vec<f64> = (0..k).map(|l| prof.column(l).iter().sum()).collect();
    sums.push(prof.aggregate.iter().sum());
    Ok((out, sums))
}

pub fn score(input: &Path, weights: Option<&str>, epsilon: f64, out: Option<&Path>) -> Result<(), CliError> {
    let w = weights.map(parse_weights).transpose()?;
    let (table, sums) = score_table(&read(input)?, w.as_deref(), epsilon)?;
    match out {
        Some(p) => write(p, &table)?,
        None => print!("{table}"),
    }
    let k = sums.len() - 1;
    let mut parts: Vec<String> = (0..k).map(|l| format!("A_{}={:.3e}", l + 1, sums[l])).collect();
    parts.push(format!("A_aggregate={:.3e}", sums[k]));
    eprintln!("column sums: {}", parts.join(" "));
    Ok(())
}

pub fn verify(seed: u64, trials: usize, fault: Fault) -> Result<(), CliError> {
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let reports = run_suite(seed, trials, fault);
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<String> =
        reports.iter().filter(|r| !r.passed()).map(|r| format!("{}: {}", r.name, r.failures[0])).collect();
    if failed.is_empty() {
        println!("all {} checks passed", reports.len());
        Ok(())
    } else {
        Err(CliError::Verification(failed.join("; ")))
    }
}
