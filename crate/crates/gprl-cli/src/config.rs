//! Flat `key = value` scenario files.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. The
//! `scenario` key is applied first because it sets kind-dependent defaults;
//! every other key is applied in file order. Unknown keys are rejected.

use gprl::policy_sim::{Baseline, Normalization, ScalarReward, ScenarioConfig, ScenarioKind};

use crate::error::CliError;

/// Every accepted key, in the order used when echoing a resolved config.
pub const KEYS: &[&str] = &[
    "scenario",
    "k",
    "g",
    "m",
    "steps",
    "seed",
    "learning_rate",
    "clip_epsilon",
    "temperature",
    "angle_scale",
    "tau",
    "gamma",
    "kappa",
    "beta0",
    "beta_max",
    "delta",
    "eps_profile",
    "controller",
    "normalization",
    "baseline",
    "scalar_reward",
    "scalar_weights",
    "lambdas",
    "exploit_axis",
    "exploit_low",
    "exploit_high",
    "exploit_penalty",
    "groups_per_step",
    "ref_window",
    "advantage_epsilon",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("`{key}` expects a number, got `{value}`"))
}

fn list(key: &str, value: &str) -> Result<Vec<f64>, String> {
    value.split(',').map(|v| num::<f64>(key, v.trim())).collect()
}

fn kind(value: &str) -> Result<ScenarioKind, String> {
    match value {
        "healthy" => Ok(ScenarioKind::Healthy),
        "hacked" => Ok(ScenarioKind::Hacked),
        "corrected" => Ok(ScenarioKind::Corrected),
        _ => Err(format!("unknown scenario `{value}` (healthy|hacked|corrected)")),
    }
}

/// Set one key on a config.
pub fn apply(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<(), String> {
    let c = &mut cfg.controller;
    match key {
        "scenario" => {
            let k = kind(value)?;
            cfg.kind = k;
            cfg.controller_enabled = k == ScenarioKind::Corrected;
        }
        "k" => cfg.k = num(key, value)?,
        "g" => cfg.g = num(key, value)?,
        "m" => cfg.m = num(key, value)?,
        "steps" => cfg.steps = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "learning_rate" => cfg.learning_rate = num(key, value)?,
        "clip_epsilon" => cfg.clip_epsilon = num(key, value)?,
        "temperature" => cfg.temperature = num(key, value)?,
        "angle_scale" => cfg.angle_scale = num(key, value)?,
        "tau" => c.tau = num(key, value)?,
        "gamma" => c.gamma = num(key, value)?,
        "kappa" => c.kappa = num(key, value)?,
        "beta0" => c.beta_0 = num(key, value)?,
        "beta_max" => c.beta_max = num(key, value)?,
        "delta" => c.delta = num(key, value)?,
        "eps_profile" => c.eps_profile = num(key, value)?,
        "controller" => {
            cfg.controller_enabled = match value {
                "on" => true,
                "off" => false,
                _ => return Err(format!("`controller` expects on|off, got `{value}`")),
            }
        }
        "normalization" => {
            cfg.normalization = match value {
                "per_dim" => Normalization::PerDim,
                "global" => Normalization::Global,
                _ => return Err(format!("`normalization` expects per_dim|global, got `{value}`")),
            }
        }
        "baseline" => {
            cfg.baseline = match value {
                "gprl" => Baseline::Gprl,
                "grpo_scalar" => Baseline::GrpoScalar,
                _ => return Err(format!("`baseline` expects gprl|grpo_scalar, got `{value}`")),
            }
        }
        "scalar_reward" => {
            cfg.scalar_reward = match value {
                "quality" => ScalarReward::Quality,
                "gpm" => ScalarReward::Gpm,
                _ => return Err(format!("`scalar_reward` expects quality|gpm, got `{value}`")),
            }
        }
        "scalar_weights" => cfg.scalar_weights = Some(list(key, value)?),
        "lambdas" => cfg.lambdas = Some(list(key, value)?),
        "exploit_axis" => {
            let a: usize = num(key, value)?;
            if a == 0 {
                return Err("`exploit_axis` is 1-based".into());
            }
            cfg.exploit_axis = a - 1;
        }
        "exploit_low" => cfg.exploit.exploit_low = num(key, value)?,
        "exploit_high" => cfg.exploit.exploit_high = num(key, value)?,
        "exploit_penalty" => cfg.exploit.exploit_penalty = num(key, value)?,
        "groups_per_step" => cfg.groups_per_step = num(key, value)?,
        "ref_window" => cfg.ref_window = num(key, value)?,
        "advantage_epsilon" => cfg.advantage_epsilon = num(key, value)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// A parsed file: the resolved config plus the line each key came from.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub config: ScenarioConfig,
    pub lines: Vec<(String, usize)>,
}

impl ParsedConfig {
    pub fn line_of(&self, key: &str) -> Option<usize> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, l)| *l)
    }
}

/// Parse config text. Errors carry the 1-based line number.
pub fn parse(text: &str) -> Result<ParsedConfig, CliError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Parse { line: line_no, message: format!("expected `key = value`, got `{line}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::Parse { line: line_no, message: format!("unknown key `{key}`") });
        }
        if pairs.iter().any(|(k, _, _): &(String, String, usize)| k == key) {
            return Err(CliError::Parse { line: line_no, message: format!("duplicate key `{key}`") });
        }
        pairs.push((key.to_string(), value.to_string(), line_no));
    }
    let mut config = ScenarioConfig::new(ScenarioKind::Healthy);
    pairs.sort_by_key(|(k, _, _)| k != "scenario");
    for (key, value, line) in &pairs {
        apply(&mut config, key, value).map_err(|message| CliError::Parse { line: *line, message })?;
    }
    let mut lines: Vec<(String, usize)> = pairs.into_iter().map(|(k, _, l)| (k, l)).collect();
    lines.sort_by_key(|(_, l)| *l);
    Ok(ParsedConfig { config, lines })
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Fully resolved `(key, value)` pairs; feeding them back through [`apply`]
/// reproduces the config.
pub fn render(cfg: &ScenarioConfig) -> Vec<(&'static str, String)> {
    let c = &cfg.controller;
    let onoff = |b: bool| if b { "on" } else { "off" }.to_string();
    vec![
        ("scenario", cfg.kind.name().to_string()),
        ("k", cfg.k.to_string()),
        ("g", cfg.g.to_string()),
        ("m", cfg.m.to_string()),
        ("steps", cfg.steps.to_string()),
        ("seed", cfg.seed.to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("clip_epsilon", cfg.clip_epsilon.to_string()),
        ("temperature", cfg.temperature.to_string()),
        ("angle_scale", cfg.angle_scale.to_string()),
        ("tau", c.tau.to_string()),
        ("gamma", c.gamma.to_string()),
        ("kappa", c.kappa.to_string()),
        ("beta0", c.beta_0.to_string()),
        ("beta_max", c.beta_max.to_string()),
        ("delta", c.delta.to_string()),
        ("eps_profile", c.eps_profile.to_string()),
        ("controller", onoff(cfg.controller_enabled)),
        (
            "normalization",
            match cfg.normalization {
                Normalization::PerDim => "per_dim",
                Normalization::Global => "global",
            }
            .to_string(),
        ),
        (
            "baseline",
            match cfg.baseline {
                Baseline::Gprl => "gprl",
                Baseline::GrpoScalar => "grpo_scalar",
            }
            .to_string(),
        ),
        (
            "scalar_reward",
            match cfg.scalar_reward {
                ScalarReward::Quality => "quality",
                ScalarReward::Gpm => "gpm",
            }
            .to_string(),
        ),
        ("scalar_weights", fmt_list(&cfg.resolved_scalar_weights())),
        ("lambdas", fmt_list(&cfg.resolved_lambdas())),
        ("exploit_axis", (cfg.exploit_axis + 1).to_string()),
        ("exploit_low", cfg.exploit.exploit_low.to_string()),
        ("exploit_high", cfg.exploit.exploit_high.to_string()),
        ("exploit_penalty", cfg.exploit.exploit_penalty.to_string()),
        ("groups_per_step", cfg.groups_per_step.to_string()),
        ("ref_window", cfg.ref_window.to_string()),
        ("advantage_epsilon", cfg.advantage_epsilon.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_applies_first() {
        let p = parse("controller = off\nscenario = hacked\n").unwrap();
        assert_eq!(p.config.kind, ScenarioKind::Hacked);
        assert!(!p.config.controller_enabled);
        let p = parse("scenario = corrected").unwrap();
        assert!(p.config.controller_enabled);
    }

    #[test]
    fn comments_and_blank_lines() {
        let p = parse("# header\n\nk = 2   # two axes\ntau = inf\n").unwrap();
        assert_eq!(p.config.k, 2);
        assert!(p.config.controller.tau.is_infinite());
        assert_eq!(p.line_of("tau"), Some(4));
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse("k = 3\ntaau = 0.2\n").unwrap_err();
        assert_eq!(err, CliError::Parse { line: 2, message: "unknown key `taau`".into() });
    }

    #[test]
    fn bad_values_report_line() {
        assert!(matches!(parse("k = three").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(matches!(parse("\ncontroller = maybe").unwrap_err(), CliError::Parse { line: 2, .. }));
        assert!(matches!(parse("k").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(matches!(parse("k=1\nk=2").unwrap_err(), CliError::Parse { line: 2, .. }));
        assert!(matches!(parse("exploit_axis = 0").unwrap_err(), CliError::Parse { line: 1, .. }));
    }

    #[test]
    fn render_round_trips() {
        for kind in ["healthy", "hacked", "corrected"] {
            let mut cfg = parse(&format!("scenario = {kind}\ntau = inf\nlambdas = 2,1,0.5")).unwrap().config;
            cfg.normalization = Normalization::Global;
            let text: String = render(&cfg).iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
            let mut back = parse(&text).unwrap().config;
            // rendering resolves the optional weights
            back.scalar_weights = cfg.scalar_weights.clone();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn every_key_is_rendered() {
        let rendered: Vec<&str> = render(&ScenarioConfig::new(ScenarioKind::Healthy)).iter().map(|(k, _)| *k).collect();
        assert_eq!(rendered, KEYS);
    }
}
