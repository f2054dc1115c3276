//! Engine values checked against brute-force enumeration.

use std::sync::Arc;

use num_rational::BigRational;
use runchart::charting::limit_trajectory;
use runchart::oracle::{enumerate_conditional, enumerate_joint, enumerate_joint_table, enumerate_pmf, DEFAULT_BUDGET};
use runchart::prob::rational;
use runchart::{
    generate_scan_compound, joint_two_step, statistic_pmf, survival_probability, Arithmetic,
    ChartConfig, ChartEngine, LevelStatus, Prob, Rule, StatFamily, SurvivalCache,
};

fn exact_engine(alpha: f64, startup: usize, rule: Rule) -> Arc<ChartEngine> {
    Arc::new(
        ChartEngine::new(ChartConfig {
            rule,
            alpha,
            startup_nu: startup,
            arithmetic: Arithmetic::Exact,
            ..ChartConfig::default()
        })
        .unwrap(),
    )
}

#[test]
fn scan_survival_five_two() {
    let family = StatFamily::Scan { window: 3 };
    let oracle = enumerate_conditional(5, 2, family, 2, DEFAULT_BUDGET).unwrap();
    let engine: BigRational = survival_probability(5, 2, &generate_scan_compound(3, 2).unwrap()).unwrap();
    assert_eq!(oracle, rational(3, 10));
    assert_eq!(engine, oracle);
}

#[test]
fn longest_run_pmf_six_three() {
    let pmf = statistic_pmf::<BigRational>(6, 3, StatFamily::LongestRun, None).unwrap();
    let oracle = enumerate_pmf(6, 3, StatFamily::LongestRun, DEFAULT_BUDGET).unwrap();
    for (k, p) in pmf {
        let expected = oracle.get(&k).cloned().unwrap_or_else(|| rational(0, 1));
        assert_eq!(p, expected, "k = {k}");
    }
}

#[test]
fn joint_five_three_three_two() {
    let family = StatFamily::LongestRun;
    let oracle = enumerate_joint(5, 3, family, 3, 2, DEFAULT_BUDGET).unwrap();
    let engine: BigRational = joint_two_step(5, 3, family, 3, 2).unwrap();
    assert_eq!(engine, oracle);
    // 01110 and 00111 reach 3 at time 5 from 2 at time 4
    assert_eq!(oracle, rational(1, 10));
}

#[test]
fn joint_scan_matches_oracle() {
    for window in 2..=4 {
        let family = StatFamily::Scan { window };
        for n in 1..=9 {
            for m in 0..=n {
                let table = enumerate_joint_table(n, m, family, DEFAULT_BUDGET).unwrap();
                for a in 0..=window {
                    for b in 0..=window {
                        let engine: BigRational = joint_two_step(n, m, family, a, b).unwrap();
                        let oracle = table.get(&(a, b)).cloned().unwrap_or_else(|| rational(0, 1));
                        assert_eq!(engine, oracle, "r={window} n={n} m={m} a={a} b={b}");
                    }
                }
            }
        }
    }
}

#[test]
fn conditional_no_signal_six_three() {
    let family = StatFamily::LongestRun;
    let table = enumerate_joint_table(6, 3, family, DEFAULT_BUDGET).unwrap();
    let both: BigRational = table
        .iter()
        .filter(|((a, b), _)| *a < 3 && *b < 3)
        .fold(rational(0, 1), |acc, (_, p)| acc + p.clone());
    let prefix: BigRational = table
        .iter()
        .filter(|((_, b), _)| *b < 3)
        .fold(rational(0, 1), |acc, (_, p)| acc + p.clone());
    let engine = exact_engine(0.1, 1, Rule::R2);
    let value = engine.conditional_no_signal_probability(6, 3, 3, 3).unwrap();
    assert_eq!(value.exact(), Some(&(both / prefix)));
}

#[test]
fn cache_agrees_with_oracle_prefix_survival() {
    let cache = SurvivalCache::new(StatFamily::Scan { window: 3 }, Arithmetic::Exact).unwrap();
    for n in 1..=10 {
        for m in 0..=n {
            let table = enumerate_joint_table(n, m, StatFamily::Scan { window: 3 }, DEFAULT_BUDGET).unwrap();
            for thr in 0..=3 {
                let oracle = table
                    .iter()
                    .filter(|((_, b), _)| *b < thr)
                    .fold(rational(0, 1), |acc, (_, p)| acc + p.clone());
                let value = cache.prefix_survival(n, m, thr).unwrap();
                assert_eq!(value.exact(), Some(&oracle), "n={n} m={m} thr={thr}");
            }
        }
    }
}

/// Level of the randomized pair of tests by direct enumeration.
fn oracle_level(
    n: usize,
    m: usize,
    family: StatFamily,
    limit: usize,
    nu: &BigRational,
    prev: Option<(usize, &BigRational)>,
) -> BigRational {
    let one = rational(1, 1);
    let zero = rational(0, 1);
    let table = enumerate_joint_table(n, m, family, DEFAULT_BUDGET).unwrap();
    let mut num = zero.clone();
    let mut den = zero.clone();
    for (&(a, b), p) in &table {
        let accept = match prev {
            None => one.clone(),
            Some((k, _)) if b < k => one.clone(),
            Some((k, v)) if b == k => &one - v,
            Some(_) => zero.clone(),
        };
        let phi = if a > limit {
            one.clone()
        } else if a == limit {
            nu.clone()
        } else {
            zero.clone()
        };
        num += p * &accept * phi;
        den += p * &accept;
    }
    num / den
}

#[test]
fn golden_limit_trace_audited_step_by_step() {
    let bits = [0u8, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 1];
    let engine = exact_engine(0.1, 4, Rule::R2);
    let steps = limit_trajectory(&bits, engine).unwrap();
    let golden: [(usize, &str, LevelStatus); 9] = [
        (2, "1/5", LevelStatus::Exact),
        (3, "7/8", LevelStatus::Exact),
        (3, "1", LevelStatus::Saturated),
        (3, "1", LevelStatus::Saturated),
        (3, "1", LevelStatus::Saturated),
        (3, "61/100", LevelStatus::Exact),
        (3, "1369/11215", LevelStatus::Exact),
        (3, "147543/1307360", LevelStatus::Exact),
        (3, "1258427/25958603", LevelStatus::Exact),
    ];
    assert!(steps[..3].iter().all(|s| s.limit.is_none()));
    let monitored = &steps[3..];
    assert_eq!(monitored.len(), golden.len());
    let mut prev: Option<(usize, BigRational)> = None;
    for (step, (limit, nu, status)) in monitored.iter().zip(golden) {
        assert_eq!(step.limit, Some(limit), "t = {}", step.t);
        assert_eq!(step.nu.as_ref().and_then(Prob::exact_string).as_deref(), Some(nu));
        assert_eq!(step.status, Some(status));
        let nu_exact = step.nu.as_ref().unwrap().exact().unwrap().clone();
        let audited = oracle_level(
            step.t,
            step.count,
            StatFamily::LongestRun,
            limit,
            &nu_exact,
            prev.as_ref().map(|(k, v)| (*k, v)),
        );
        assert_eq!(step.level.as_ref().unwrap().exact(), Some(&audited), "t = {}", step.t);
        if status == LevelStatus::Exact {
            assert_eq!(audited, rational(1, 10));
        }
        prev = Some((limit, nu_exact));
    }
}

#[test]
fn scan_rule_trace_audited() {
    let bits = [1u8, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0, 1];
    let family = StatFamily::Scan { window: 3 };
    let engine = exact_engine(0.2, 3, Rule::R1 { window: 3 });
    let steps = limit_trajectory(&bits, engine).unwrap();
    let mut prev: Option<(usize, BigRational)> = None;
    for step in steps.iter().filter(|s| s.limit.is_some()) {
        let limit = step.limit.unwrap();
        let nu = step.nu.as_ref().unwrap().exact().unwrap().clone();
        if step.status != Some(LevelStatus::Degenerate) {
            let audited = oracle_level(step.t, step.count, family, limit, &nu, prev.as_ref().map(|(k, v)| (*k, v)));
            assert_eq!(step.level.as_ref().unwrap().exact(), Some(&audited), "t = {}", step.t);
        }
        prev = Some((limit, nu));
    }
}

#[test]
fn all_ones_deterministic_chart_trace() {
    // N_n = n forces L_n = n, so the admissible limit k_{n-1} + 1 = n always
    // has zero mass above it and the conservative chart never signals
    let engine = Arc::new(
        ChartEngine::new(ChartConfig {
            alpha: 0.1,
            startup_nu: 3,
            randomize: false,
            arithmetic: Arithmetic::Exact,
            ..ChartConfig::default()
        })
        .unwrap(),
    );
    let rl = runchart::run_length_bits(&[1; 6], engine).unwrap();
    assert!(rl.censored());
    assert_eq!(rl.limit_trajectory, vec![3, 4, 5, 6]);
    assert_eq!(rl.stat_trajectory, vec![1, 2, 3, 4, 5, 6]);
}
