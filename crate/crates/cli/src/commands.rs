use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use num_rational::BigRational;
use runchart::charting::limit_trajectory;
use runchart::oracle::{verify_grid, verify_joint_grid};
use runchart::simulation::{estimate_arl, geometric_check, sweep_threshold, ArlEstimate, ScenarioSpec};
use runchart::{
    binarize, statistic_pmf, Arithmetic, ChartConfig, ChartEngine, ChartState, Prob,
    RunLengthRecord, StatFamily, StepRecord, Update,
};
use serde_json::{json, Value};

use crate::args::{
    DistArgs, Format, LimitsArgs, MonitorArgs, RuleName, SimulateArgs, SweepArgs, VerifyArgs,
};
use crate::config::{self, FileConfig};
use crate::input::{parse_bits, Observations};
use crate::{CliError, EXIT_MISMATCH, EXIT_SIGNAL};

type CmdResult = Result<u8, CliError>;

const STEP_COLUMNS: &str = "t,y,bit,count,stat,limit,nu,nu_exact,level,level_exact,status,signal";

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>, CliError> {
    match path {
        None => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) => File::open(p)
            .map(|f| Box::new(BufReader::new(f)) as Box<dyn BufRead>)
            .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", p.display()))),
    }
}

fn family_label(family: StatFamily) -> String {
    match family {
        StatFamily::LongestRun => "longest_run".into(),
        StatFamily::Scan { window } => format!("scan(r={window})"),
    }
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn prob_pair(p: Option<&Prob>) -> (Value, Value) {
    match p {
        None => (Value::Null, Value::Null),
        Some(p) => (
            json!(p.to_f64()),
            p.exact_string().map(Value::from).unwrap_or(Value::Null),
        ),
    }
}

fn snake<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn step_json(rec: &StepRecord) -> Value {
    let (nu, nu_exact) = prob_pair(rec.nu.as_ref());
    let (level, level_exact) = prob_pair(rec.level.as_ref());
    json!({
        "type": "step",
        "t": rec.t,
        "y": rec.y,
        "bit": rec.bit,
        "count": rec.count,
        "stat": rec.stat,
        "limit": rec.limit,
        "nu": nu,
        "nu_exact": nu_exact,
        "level": level,
        "level_exact": level_exact,
        "status": rec.status,
        "signal": rec.signal,
    })
}

fn step_csv(rec: &StepRecord) -> String {
    let exact = |p: Option<&Prob>| p.and_then(|p| p.exact_string()).unwrap_or_default();
    [
        rec.t.to_string(),
        opt_f64(rec.y),
        rec.bit.to_string(),
        rec.count.to_string(),
        rec.stat.to_string(),
        rec.limit.map(|l| l.to_string()).unwrap_or_default(),
        opt_f64(rec.nu.as_ref().map(Prob::to_f64)),
        exact(rec.nu.as_ref()),
        opt_f64(rec.level.as_ref().map(Prob::to_f64)),
        exact(rec.level.as_ref()),
        rec.status.as_ref().map(snake).unwrap_or_default(),
        rec.signal.as_ref().map(snake).unwrap_or_default(),
    ]
    .join(",")
}

fn run_length_json(rec: &RunLengthRecord) -> Value {
    json!({
        "type": "run_length",
        "rl": rec.rl,
        "monitored_rl": rec.monitored_run_length(),
        "censored": rec.censored(),
        "observations": rec.observations,
        "startup_nu": rec.startup_nu,
        "signal_kind": rec.signal_kind,
        "limit_trajectory": rec.limit_trajectory,
        "stat_trajectory": rec.stat_trajectory,
    })
}

fn chart_engine(config: ChartConfig) -> Result<Arc<ChartEngine>, CliError> {
    Ok(Arc::new(ChartEngine::new(config)?))
}

pub fn dist(args: DistArgs) -> CmdResult {
    let family = match config::rule(args.rule, args.window)? {
        runchart::Rule::R2 => StatFamily::LongestRun,
        runchart::Rule::R1 { window } => StatFamily::Scan { window },
    };
    let threshold = match (args.rule, args.d, args.s) {
        (RuleName::LongestRun, d, None) => d,
        (RuleName::Scan, None, s) => s,
        (RuleName::LongestRun, _, Some(_)) => {
            return Err(CliError::Usage("--s applies to the scan rule; use --d".into()))
        }
        (RuleName::Scan, Some(_), _) => {
            return Err(CliError::Usage("--d applies to the longest-run rule; use --s".into()))
        }
    };
    let arithmetic = config::arithmetic(&args.arithmetic, &FileConfig::default(), Arithmetic::default());
    let exact = arithmetic.exact_at(args.n);
    let mut out = io::stdout().lock();

    if args.pmf || threshold.is_none() {
        let pmf: Vec<(usize, Prob)> = if exact {
            statistic_pmf::<BigRational>(args.n, args.m, family, None)?
                .into_iter()
                .map(|(k, p)| (k, Prob::Exact(p)))
                .collect()
        } else {
            statistic_pmf::<f64>(args.n, args.m, family, None)?
                .into_iter()
                .map(|(k, p)| (k, Prob::Float(p)))
                .collect()
        };
        match args.format.format {
            Format::Json => {
                let rows: Vec<Value> = pmf
                    .iter()
                    .map(|(k, p)| {
                        let (f, e) = prob_pair(Some(p));
                        json!({"value": k, "probability": f, "exact": e})
                    })
                    .collect();
                let mut doc = json!({
                    "n": args.n,
                    "M": args.m,
                    "family": family,
                    "pmf": rows,
                });
                if args.dump_patterns {
                    if let Some(thr) = threshold {
                        doc["patterns"] = patterns_json(family, thr)?;
                    }
                }
                writeln!(out, "{doc}")?;
            }
            Format::Csv => {
                writeln!(out, "value,probability,exact")?;
                for (k, p) in &pmf {
                    writeln!(out, "{k},{},{}", p.to_f64(), p.exact_string().unwrap_or_default())?;
                }
            }
        }
        return Ok(0);
    }

    let threshold = threshold.unwrap_or_default();
    let probability = if exact {
        Prob::Exact(family.survival::<BigRational>(args.n, args.m, threshold)?)
    } else {
        Prob::Float(family.survival::<f64>(args.n, args.m, threshold)?)
    };
    match args.format.format {
        Format::Json => {
            let (f, e) = prob_pair(Some(&probability));
            let mut doc = json!({
                "n": args.n,
                "M": args.m,
                "family": family,
                "threshold": threshold,
                "probability": f,
                "exact": e,
            });
            if args.dump_patterns {
                doc["patterns"] = patterns_json(family, threshold)?;
            }
            writeln!(out, "{doc}")?;
        }
        Format::Csv => {
            writeln!(out, "n,M,family,threshold,probability,exact")?;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                args.n,
                args.m,
                family_label(family),
                threshold,
                probability.to_f64(),
                probability.exact_string().unwrap_or_default()
            )?;
        }
    }
    Ok(0)
}

fn patterns_json(family: StatFamily, threshold: usize) -> Result<Value, CliError> {
    if threshold == 0 {
        return Ok(json!([]));
    }
    let cp = family.compound(threshold)?;
    Ok(json!(cp.patterns().iter().map(|p| p.to_string()).collect::<Vec<_>>()))
}

pub fn limits(args: LimitsArgs) -> CmdResult {
    let file = FileConfig::load(args.chart.config.as_deref())?;
    let config = config::chart_config(&args.chart, &file, Arithmetic::default())?;
    let c = config.threshold_c;
    let (bits, ys) = match &args.bits {
        Some(text) => (parse_bits(text)?, None),
        None => {
            let mut obs = Observations::new(open_input(args.input.as_deref())?);
            let mut bits = Vec::new();
            let mut ys = Vec::new();
            while let Some((line, y)) = obs.next_value()? {
                bits.push(binarize(y, c).map_err(|e| CliError::Input { line, message: e.to_string() })?);
                ys.push(y);
            }
            (bits, Some(ys))
        }
    };
    let mut steps = limit_trajectory(&bits, chart_engine(config)?)?;
    if let Some(ys) = ys {
        for (rec, y) in steps.iter_mut().zip(ys) {
            rec.y = Some(y);
        }
    }
    let mut out = io::stdout().lock();
    match args.format.format {
        Format::Json => {
            for rec in &steps {
                writeln!(out, "{}", step_json(rec))?;
            }
        }
        Format::Csv => {
            writeln!(out, "{STEP_COLUMNS}")?;
            for rec in &steps {
                writeln!(out, "{}", step_csv(rec))?;
            }
        }
    }
    Ok(0)
}

pub fn monitor(args: MonitorArgs) -> CmdResult {
    let file = FileConfig::load(args.chart.config.as_deref())?;
    let config = config::chart_config(&args.chart, &file, Arithmetic::default())?;
    let mut chart = ChartState::new(chart_engine(config)?);
    let mut obs = Observations::new(open_input(args.input.as_deref())?);
    let mut out = io::stdout().lock();
    let format = args.format.format;
    if format == Format::Csv {
        writeln!(out, "{STEP_COLUMNS}")?;
        out.flush()?;
    }
    let emit = |out: &mut io::StdoutLock, rec: &StepRecord| -> io::Result<()> {
        match format {
            Format::Json => writeln!(out, "{}", step_json(rec))?,
            Format::Csv => writeln!(out, "{}", step_csv(rec))?,
        }
        out.flush()
    };
    let finish = |out: &mut io::StdoutLock, rec: &RunLengthRecord| -> io::Result<()> {
        let doc = run_length_json(rec);
        match format {
            Format::Json => {
                writeln!(out, "{doc}")?;
                out.flush()
            }
            Format::Csv => writeln!(io::stderr(), "{doc}"),
        }
    };
    while let Some((line, y)) = obs.next_value()? {
        let update = chart.update(y).map_err(|e| match e {
            runchart::Error::NonFiniteObservation(_) => CliError::Input { line, message: e.to_string() },
            other => other.into(),
        })?;
        emit(&mut out, update.record())?;
        if let Update::Signal(_, rl) = update {
            finish(&mut out, &rl)?;
            return Ok(EXIT_SIGNAL);
        }
    }
    finish(&mut out, &chart.run_length_record(None))?;
    Ok(0)
}

fn estimate_csv_row(config: &ChartConfig, scenario: &ScenarioSpec, est: &ArlEstimate) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        config.alpha,
        config.threshold_c,
        scenario.change_point(),
        scenario.reps,
        est.mean,
        est.std_error,
        est.censored_count,
        est.false_alarms,
        est.runs
    )
}

pub fn simulate(args: SimulateArgs) -> CmdResult {
    let file = FileConfig::load(args.chart.config.as_deref())?;
    let config = config::chart_config(&args.chart, &file, Arithmetic::Float)?;
    let scenario = config::scenario(&args.scenario, &file, config.seed)?;
    let mut out = io::stdout().lock();
    let (estimate, geometric) = if args.geometric {
        let report = geometric_check(&scenario, &config)?;
        (report.estimate.clone(), Some(report))
    } else {
        (estimate_arl(&scenario, &config)?, None)
    };
    match args.format.format {
        Format::Json => {
            let mut doc = json!({
                "chart": config,
                "scenario": scenario,
                "estimate": estimate,
            });
            if let Some(report) = &geometric {
                doc["geometric"] = serde_json::to_value(report)
                    .map_err(|e| CliError::Internal(e.to_string()))?;
            }
            writeln!(out, "{doc}")?;
        }
        Format::Csv => {
            let mut header =
                "alpha,c,change_point,reps,mean,std_error,censored,false_alarms,runs".to_string();
            let mut row = estimate_csv_row(&config, &scenario, &estimate);
            if let Some(r) = &geometric {
                header.push_str(",z,chi_square,dof,p_value");
                row.push_str(&format!(",{},{},{},{}", r.z, r.chi_square, r.dof, r.p_value));
            }
            writeln!(out, "{header}")?;
            writeln!(out, "{row}")?;
        }
    }
    Ok(0)
}

pub fn sweep(args: SweepArgs) -> CmdResult {
    let file = FileConfig::load(args.chart.config.as_deref())?;
    let config = config::chart_config(&args.chart, &file, Arithmetic::Float)?;
    let scenario = config::scenario(&args.scenario, &file, config.seed)?;
    for &c in &args.cs {
        if !c.is_finite() {
            return Err(CliError::Usage(format!("cutoff {c} is not finite")));
        }
    }
    let rows = sweep_threshold(&scenario, &config, &args.cs)?;
    let mut out = io::stdout().lock();
    match args.format.format {
        Format::Json => {
            let doc = json!({
                "chart": config,
                "scenario": scenario,
                "rows": rows,
            });
            writeln!(out, "{doc}")?;
        }
        Format::Csv => {
            writeln!(out, "c,mean,std_error,censored,false_alarms,runs")?;
            for r in &rows {
                let e = &r.estimate;
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.c, e.mean, e.std_error, e.censored_count, e.false_alarms, e.runs
                )?;
            }
        }
    }
    Ok(0)
}

pub fn verify(args: VerifyArgs) -> CmdResult {
    let report = verify_grid(args.max_n)?;
    let joint = verify_joint_grid(args.joint_max_n, args.joint_max_n)?;
    let mut groups: Vec<(StatFamily, usize, usize, usize)> = Vec::new();
    for cell in &report.cells {
        match groups.last_mut() {
            Some(g) if g.0 == cell.family && g.1 == cell.threshold => {
                g.2 += 1;
                g.3 += usize::from(!cell.ok);
            }
            _ => groups.push((cell.family, cell.threshold, 1, usize::from(!cell.ok))),
        }
    }
    let joint_mismatches = joint.iter().filter(|c| !c.ok).count();
    let passed = report.passed() && joint_mismatches == 0;
    let status = |bad: usize| if bad == 0 { "pass" } else { "fail" };
    let mut out = io::stdout().lock();
    match args.format.format {
        Format::Json => {
            let grid: Vec<Value> = groups
                .iter()
                .map(|&(family, threshold, cells, bad)| {
                    json!({
                        "family": family,
                        "threshold": threshold,
                        "cells": cells,
                        "mismatches": bad,
                        "status": status(bad),
                    })
                })
                .collect();
            let failures: Vec<Value> = report
                .cells
                .iter()
                .filter(|c| !c.ok)
                .map(|c| json!(c))
                .chain(joint.iter().filter(|c| !c.ok).map(|c| json!(c)))
                .collect();
            let doc = json!({
                "max_n": args.max_n,
                "joint_max_n": args.joint_max_n,
                "grid": grid,
                "joint": {
                    "family": StatFamily::LongestRun,
                    "cells": joint.len(),
                    "mismatches": joint_mismatches,
                    "status": status(joint_mismatches),
                },
                "failures": failures,
                "passed": passed,
            });
            writeln!(out, "{doc}")?;
        }
        Format::Csv => {
            writeln!(out, "check,family,threshold,cells,mismatches,status")?;
            for &(family, threshold, cells, bad) in &groups {
                writeln!(
                    out,
                    "survival,{},{threshold},{cells},{bad},{}",
                    family_label(family),
                    status(bad)
                )?;
            }
            writeln!(
                out,
                "joint,longest_run,,{},{joint_mismatches},{}",
                joint.len(),
                status(joint_mismatches)
            )?;
        }
    }
    Ok(if passed { 0 } else { EXIT_MISMATCH })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_labels() {
        assert_eq!(family_label(StatFamily::LongestRun), "longest_run");
        assert_eq!(family_label(StatFamily::Scan { window: 4 }), "scan(r=4)");
    }

    #[test]
    fn prob_pairs_carry_exact_strings() {
        let p = Prob::Exact(runchart::prob::rational(7, 10));
        let (f, e) = prob_pair(Some(&p));
        assert_eq!(f, json!(0.7));
        assert_eq!(e, json!("7/10"));
        let (f, e) = prob_pair(Some(&Prob::Float(0.25)));
        assert_eq!(f, json!(0.25));
        assert_eq!(e, Value::Null);
    }
}
