//! Settings resolved from flags, an optional config file and defaults.

use std::path::Path;

use runchart::simulation::{Distribution, ScenarioSpec};
use runchart::{Arithmetic, ChartConfig, Rule};
use serde::Deserialize;

use crate::args::{ArithmeticArgs, ArithmeticName, ChartArgs, DistName, RuleName, ScenarioArgs};
use crate::CliError;

pub const SEED_ENV: &str = "RUNCHART_SEED";
const DEFAULT_EXACT_MAX_N: usize = 64;
const DEFAULT_SHIFT_WARMUP: usize = 20;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub rule: Option<RuleName>,
    #[serde(alias = "r")]
    pub window: Option<usize>,
    pub alpha: Option<f64>,
    pub c: Option<f64>,
    pub mu_hint: Option<f64>,
    pub startup_nu: Option<usize>,
    pub randomize: Option<bool>,
    pub seed: Option<u64>,
    pub arithmetic: Option<ArithmeticName>,
    pub exact_max_n: Option<usize>,
    pub dist: Option<DistName>,
    pub df: Option<f64>,
    pub rate: Option<f64>,
    pub low: Option<f64>,
    pub high: Option<f64>,
    pub mu: Option<f64>,
    pub warmup: Option<usize>,
    pub tau: Option<usize>,
    pub reps: Option<usize>,
    pub horizon: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let parsed = match ext {
            "json" => serde_json::from_str(&text).map_err(|e| e.to_string()),
            "toml" => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => serde_json::from_str(&text)
                .map_err(|e| e.to_string())
                .or_else(|_| toml::from_str(&text).map_err(|e| e.to_string())),
        };
        parsed.map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

pub fn arithmetic(
    flags: &ArithmeticArgs,
    file: &FileConfig,
    default: Arithmetic,
) -> Arithmetic {
    let bound = flags
        .exact_max_n
        .or(file.exact_max_n)
        .unwrap_or(DEFAULT_EXACT_MAX_N);
    match flags.arithmetic.or(file.arithmetic) {
        Some(ArithmeticName::Exact) => Arithmetic::Exact,
        Some(ArithmeticName::Float) => Arithmetic::Float,
        Some(ArithmeticName::Auto) => Arithmetic::Auto { exact_max_n: bound },
        None => match default {
            Arithmetic::Auto { .. } => Arithmetic::Auto { exact_max_n: bound },
            other => other,
        },
    }
}

pub fn rule(name: RuleName, window: Option<usize>) -> Result<Rule, CliError> {
    match name {
        RuleName::LongestRun => Ok(Rule::R2),
        RuleName::Scan => window
            .map(|window| Rule::R1 { window })
            .ok_or_else(|| CliError::Usage("the scan rule needs --window".into())),
    }
}

pub fn chart_config(
    flags: &ChartArgs,
    file: &FileConfig,
    default_arithmetic: Arithmetic,
) -> Result<ChartConfig, CliError> {
    let defaults = ChartConfig::default();
    let rule = rule(
        flags.rule.or(file.rule).unwrap_or(RuleName::LongestRun),
        flags.window.or(file.window),
    )?;
    let threshold_c = flags
        .c
        .or(flags.mu_hint.map(ChartConfig::threshold_for_shift))
        .or(file.c)
        .or(file.mu_hint.map(ChartConfig::threshold_for_shift))
        .unwrap_or(defaults.threshold_c);
    let randomize = if flags.no_randomize {
        false
    } else {
        file.randomize.unwrap_or(defaults.randomize)
    };
    let seed = match flags.seed.or(file.seed) {
        Some(s) => s,
        None => env_seed()?.unwrap_or(defaults.seed),
    };
    let config = ChartConfig {
        rule,
        alpha: flags.alpha.or(file.alpha).unwrap_or(defaults.alpha),
        threshold_c,
        startup_nu: flags.startup_nu.or(file.startup_nu).unwrap_or(defaults.startup_nu),
        randomize,
        seed,
        arithmetic: arithmetic(&flags.arithmetic, file, default_arithmetic),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn scenario(
    flags: &ScenarioArgs,
    file: &FileConfig,
    seed: u64,
) -> Result<ScenarioSpec, CliError> {
    let dist = match flags.dist.or(file.dist).unwrap_or(DistName::Normal) {
        DistName::Normal => Distribution::standard_normal(),
        DistName::T => Distribution::StudentT {
            df: flags
                .df
                .or(file.df)
                .ok_or_else(|| CliError::Usage("--dist t needs --df".into()))?,
            loc: 0.0,
            scale: 1.0,
        },
        DistName::Exponential => Distribution::Exponential {
            rate: flags.rate.or(file.rate).unwrap_or(1.0),
            loc: 0.0,
        },
        DistName::Uniform => Distribution::Uniform {
            low: flags.low.or(file.low).unwrap_or(0.0),
            high: flags.high.or(file.high).unwrap_or(1.0),
        },
    };
    let mu = flags.mu.or(file.mu).unwrap_or(0.0);
    let default_warmup = if mu == 0.0 { 0 } else { DEFAULT_SHIFT_WARMUP };
    let reference = ScenarioSpec::in_control(dist, 1000, seed);
    let spec = ScenarioSpec {
        dist0: dist,
        dist1: dist.shifted(mu),
        warmup: flags.warmup.or(file.warmup).unwrap_or(default_warmup),
        tau: flags.tau.or(file.tau).unwrap_or(reference.tau),
        horizon: flags.horizon.or(file.horizon).unwrap_or(reference.horizon),
        reps: flags.reps.or(file.reps).unwrap_or(reference.reps),
        seed,
    };
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(spec)
}
