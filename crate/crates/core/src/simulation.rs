//! Monte Carlo run-length estimation under a change-point model.
//!
//! Observation `t` is drawn from `dist0` for `t < warmup + tau` and from
//! `dist1` afterwards. Run lengths are measured from
//! `origin = max(warmup + tau, startup_nu)`, so `RL = signal - origin + 1`.
//! A signal before the change point is a false alarm; that replication is
//! rerun on a fresh substream and counted in [`ArlEstimate::false_alarms`].
//!
//! Replications advance in lockstep so every chart queries the same rows of
//! the shared survival tables, which then only keep a few recent rows.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::charting::{ChartConfig, ChartEngine, ChartState, Update};
use crate::error::{invalid, Error, Result};
use crate::fmci::Retention;

/// Rows kept by the shared tables during a lockstep round.
const LOCKSTEP_ROWS: usize = 4;
/// Reruns allowed per replication before giving up.
const MAX_ATTEMPTS: u32 = 10_000;

fn zero() -> f64 {
    0.0
}

fn one() -> f64 {
    1.0
}

/// Observation generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Distribution {
    Normal {
        #[serde(default = "zero")]
        mean: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    StudentT {
        df: f64,
        #[serde(default = "zero")]
        loc: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    Exponential {
        #[serde(default = "one")]
        rate: f64,
        #[serde(default = "zero")]
        loc: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

impl Distribution {
    pub fn standard_normal() -> Self {
        Distribution::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Distribution::StudentT { df, loc, scale } => {
                df > 0.0 && df.is_finite() && loc.is_finite() && scale > 0.0 && scale.is_finite()
            }
            Distribution::Exponential { rate, loc } => rate > 0.0 && rate.is_finite() && loc.is_finite(),
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid distribution parameters {self:?}")))
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Normal { mean, sd } => {
                mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
            Distribution::StudentT { df, loc, scale } => {
                let t = rand_distr::StudentT::new(df).expect("validated df");
                loc + scale * t.sample(rng)
            }
            Distribution::Exponential { rate, loc } => {
                loc + rand_distr::Exp::new(rate).expect("validated rate").sample(rng)
            }
            Distribution::Uniform { low, high } => rand_distr::Uniform::new(low, high).sample(rng),
        }
    }

    /// Same shape moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        match *self {
            Distribution::Normal { mean, sd } => Distribution::Normal { mean: mean + delta, sd },
            Distribution::StudentT { df, loc, scale } => Distribution::StudentT {
                df,
                loc: loc + delta,
                scale,
            },
            Distribution::Exponential { rate, loc } => Distribution::Exponential {
                rate,
                loc: loc + delta,
            },
            Distribution::Uniform { low, high } => Distribution::Uniform {
                low: low + delta,
                high: high + delta,
            },
        }
    }

    /// Inverse CDF at `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("quantile level must lie in (0, 1), got {p}")));
        }
        self.validate()?;
        let bad = |e: statrs::StatsError| invalid(e.to_string());
        Ok(match *self {
            Distribution::Normal { mean, sd } => {
                statrs::distribution::Normal::new(mean, sd).map_err(bad)?.inverse_cdf(p)
            }
            Distribution::StudentT { df, loc, scale } => {
                statrs::distribution::StudentsT::new(loc, scale, df)
                    .map_err(bad)?
                    .inverse_cdf(p)
            }
            Distribution::Exponential { rate, loc } => {
                loc + statrs::distribution::Exp::new(rate).map_err(bad)?.inverse_cdf(p)
            }
            Distribution::Uniform { low, high } => low + p * (high - low),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub dist0: Distribution,
    pub dist1: Distribution,
    /// In-control observations before the change-point clock starts.
    #[serde(default)]
    pub warmup: usize,
    /// First shifted observation, counted after the warm-up (1 = immediately).
    #[serde(default = "default_tau")]
    pub tau: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_tau() -> usize {
    1
}

fn default_horizon() -> usize {
    10_000
}

fn default_reps() -> usize {
    1000
}

impl ScenarioSpec {
    /// No shift at all.
    pub fn in_control(dist: Distribution, reps: usize, seed: u64) -> Self {
        Self {
            dist0: dist,
            dist1: dist,
            warmup: 0,
            tau: 1,
            horizon: default_horizon(),
            reps,
            seed,
        }
    }

    /// Mean shift of `mu` after `warmup` in-control observations.
    pub fn shift(dist: Distribution, mu: f64, warmup: usize, reps: usize, seed: u64) -> Self {
        Self {
            dist0: dist,
            dist1: dist.shifted(mu),
            warmup,
            tau: 1,
            horizon: default_horizon(),
            reps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dist0.validate()?;
        self.dist1.validate()?;
        if self.reps < 1 || self.horizon < 1 || self.tau < 1 {
            return Err(invalid("reps, horizon and tau must all be at least 1"));
        }
        Ok(())
    }

    /// Index of the first observation drawn from `dist1`.
    pub fn change_point(&self) -> usize {
        self.warmup + self.tau
    }
}

/// Aggregated run lengths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArlEstimate {
    /// Mean over uncensored runs.
    pub mean: f64,
    pub std_error: f64,
    pub censored_count: usize,
    pub false_alarms: usize,
    /// Uncensored runs.
    pub runs: usize,
    pub rl_histogram: BTreeMap<usize, u64>,
    #[serde(skip)]
    pub run_lengths: Vec<usize>,
}

impl ArlEstimate {
    fn from_lengths(run_lengths: Vec<usize>, censored_count: usize, false_alarms: usize) -> Self {
        let runs = run_lengths.len();
        let mut rl_histogram = BTreeMap::new();
        for &rl in &run_lengths {
            *rl_histogram.entry(rl).or_insert(0) += 1;
        }
        let (mean, std_error) = if runs == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let sum: u128 = run_lengths.iter().map(|&r| r as u128).sum();
            let mean = sum as f64 / runs as f64;
            let var = if runs > 1 {
                run_lengths
                    .iter()
                    .map(|&r| (r as f64 - mean).powi(2))
                    .sum::<f64>()
                    / (runs - 1) as f64
            } else {
                0.0
            };
            (mean, (var / runs as f64).sqrt())
        };
        Self {
            mean,
            std_error,
            censored_count,
            false_alarms,
            runs,
            rl_histogram,
            run_lengths,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Outcome {
    Signal(usize),
    Censored,
}

struct Replication {
    index: usize,
    attempt: u32,
    chart: ChartState,
    obs: ChaCha8Rng,
}

fn substream(seed: u64, index: usize, attempt: u32, role: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 24 | u64::from(attempt)) << 1 | role);
    rng
}

/// Runs the given `(replication, attempt)` jobs together, one time step at a
/// time.
fn lockstep_round(
    engine: &Arc<ChartEngine>,
    scenario: &ScenarioSpec,
    jobs: &[(usize, u32)],
) -> Result<Vec<(usize, u32, Outcome)>> {
    let seed = scenario.seed ^ engine.config().seed.rotate_left(32);
    let change = scenario.change_point();
    let mut active: Vec<Replication> = jobs
        .iter()
        .map(|&(index, attempt)| Replication {
            index,
            attempt,
            chart: ChartState::with_rng(engine.clone(), substream(seed, index, attempt, 1)),
            obs: substream(seed, index, attempt, 0),
        })
        .collect();
    let mut done = Vec::with_capacity(jobs.len());
    for t in 1..=scenario.horizon {
        if active.is_empty() {
            break;
        }
        let dist = if t < change { scenario.dist0 } else { scenario.dist1 };
        let signalled: Vec<bool> = active
            .par_iter_mut()
            .map(|rep| {
                let y = dist.sample(&mut rep.obs);
                Ok(matches!(rep.chart.update(y)?, Update::Signal(..)))
            })
            .collect::<Result<_>>()?;
        let mut keep = Vec::with_capacity(active.len());
        for (rep, hit) in active.into_iter().zip(signalled) {
            if hit {
                done.push((rep.index, rep.attempt, Outcome::Signal(t)));
            } else {
                keep.push(rep);
            }
        }
        active = keep;
    }
    done.extend(active.into_iter().map(|r| (r.index, r.attempt, Outcome::Censored)));
    Ok(done)
}

/// Run-length estimate over `scenario.reps` independent charts.
pub fn estimate_arl(scenario: &ScenarioSpec, config: &ChartConfig) -> Result<ArlEstimate> {
    scenario.validate()?;
    let engine = Arc::new(ChartEngine::with_retention(
        config.clone(),
        Retention::Sliding { keep: LOCKSTEP_ROWS },
    )?);
    let change = scenario.change_point();
    let origin = change.max(config.startup_nu);
    let mut slots: Vec<Option<Outcome>> = vec![None; scenario.reps];
    let mut jobs: Vec<(usize, u32)> = (0..scenario.reps).map(|i| (i, 0)).collect();
    let mut false_alarms = 0;
    while !jobs.is_empty() {
        let mut retry = Vec::new();
        for (index, attempt, outcome) in lockstep_round(&engine, scenario, &jobs)? {
            match outcome {
                Outcome::Signal(t) if t < change => {
                    false_alarms += 1;
                    if attempt + 1 >= MAX_ATTEMPTS {
                        return Err(Error::Invariant(format!(
                            "replication {index} raised {MAX_ATTEMPTS} false alarms"
                        )));
                    }
                    retry.push((index, attempt + 1));
                }
                other => slots[index] = Some(other),
            }
        }
        retry.sort_unstable();
        jobs = retry;
    }
    let mut lengths = Vec::with_capacity(scenario.reps);
    let mut censored = 0;
    for slot in slots {
        match slot {
            Some(Outcome::Signal(t)) => lengths.push(t + 1 - origin),
            _ => censored += 1,
        }
    }
    Ok(ArlEstimate::from_lengths(lengths, censored, false_alarms))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub estimate: ArlEstimate,
}

/// [`estimate_arl`] for each cutoff in `cs`, same scenario and seed.
pub fn sweep_threshold(
    scenario: &ScenarioSpec,
    template: &ChartConfig,
    cs: &[f64],
) -> Result<Vec<SweepRow>> {
    cs.iter()
        .map(|&c| {
            let config = ChartConfig {
                threshold_c: c,
                ..template.clone()
            };
            Ok(SweepRow {
                c,
                estimate: estimate_arl(scenario, &config)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GofBin {
    pub low: usize,
    /// Inclusive upper end, `None` for the tail.
    pub high: Option<usize>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometricReport {
    pub alpha: f64,
    pub reps: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `(mean - 1/alpha) / std_error`.
    pub z: f64,
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: Vec<GofBin>,
    pub censored: usize,
    #[serde(skip)]
    pub estimate: ArlEstimate,
}

/// Chi-square fit of in-control run lengths to geometric(`alpha`).
pub fn geometric_check(scenario: &ScenarioSpec, config: &ChartConfig) -> Result<GeometricReport> {
    if scenario.dist0 != scenario.dist1 {
        return Err(invalid("geometric check needs an in-control scenario"));
    }
    let estimate = estimate_arl(scenario, config)?;
    let (chi_square, dof, p_value, bins) =
        geometric_gof(&estimate.rl_histogram, estimate.censored_count, config.alpha)?;
    let target = 1.0 / config.alpha;
    Ok(GeometricReport {
        alpha: config.alpha,
        reps: scenario.reps,
        mean: estimate.mean,
        std_error: estimate.std_error,
        z: (estimate.mean - target) / estimate.std_error,
        chi_square,
        dof,
        p_value,
        bins,
        censored: estimate.censored_count,
        estimate,
    })
}

/// Pearson statistic, degrees of freedom, p-value and bins for a histogram
/// of run lengths on `1, 2, ...` against geometric(`alpha`). Censored runs
/// fall in the tail. Adjacent values are pooled until each bin expects at
/// least five runs.
pub fn geometric_gof(
    histogram: &BTreeMap<usize, u64>,
    censored: usize,
    alpha: f64,
) -> Result<(f64, usize, f64, Vec<GofBin>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    let total = histogram.values().sum::<u64>() + censored as u64;
    if total == 0 {
        return Err(invalid("no run lengths to test"));
    }
    let n = total as f64;
    let mut bins: Vec<GofBin> = Vec::new();
    let mut low = 1;
    let mut observed = 0;
    let mut expected = 0.0;
    let mut k = 1;
    loop {
        let tail_expected = n * (1.0 - alpha).powi(k as i32 - 1) - expected;
        if tail_expected < 10.0 {
            break;
        }
        observed += histogram.get(&k).copied().unwrap_or(0);
        expected += n * alpha * (1.0 - alpha).powi(k as i32 - 1);
        if expected >= 5.0 {
            bins.push(GofBin { low, high: Some(k), observed, expected });
            low = k + 1;
            observed = 0;
            expected = 0.0;
        }
        k += 1;
    }
    // everything from `low` on, including the pending partial bin
    let tail_observed =
        histogram.range(low..).map(|(_, c)| *c).sum::<u64>() + censored as u64;
    let tail_expected = n * (1.0 - alpha).powi(low as i32 - 1);
    bins.push(GofBin {
        low,
        high: None,
        observed: tail_observed,
        expected: tail_expected,
    });
    if bins.len() < 2 {
        return Err(invalid("too few run lengths for a chi-square test"));
    }
    let chi_square: f64 = bins
        .iter()
        .map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected)
        .sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .map_err(|e| invalid(e.to_string()))?
        .sf(chi_square);
    Ok((chi_square, dof, p_value, bins))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic null distribution.
pub fn ks_two_sample(a: &[usize], b: &[usize]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("KS test needs two non-empty samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_unstable();
    y.sort_unstable();
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] == v {
            i += 1;
        }
        while j < y.len() && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsReport {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charting::Rule;
    use crate::prob::Arithmetic;
    use rand::Rng;

    fn fast_config(alpha: f64) -> ChartConfig {
        ChartConfig {
            rule: Rule::R2,
            alpha,
            threshold_c: 0.0,
            startup_nu: 5,
            arithmetic: Arithmetic::Float,
            ..ChartConfig::default()
        }
    }

    #[test]
    fn quantiles_match_closed_forms() {
        let n = Distribution::standard_normal();
        assert!((n.quantile(0.5).unwrap()).abs() < 1e-12);
        let e = Distribution::Exponential { rate: 1.0, loc: 0.0 };
        assert!((e.quantile(0.6).unwrap() - (-(0.4f64).ln())).abs() < 1e-9);
        let u = Distribution::Uniform { low: 2.0, high: 4.0 };
        assert_eq!(u.quantile(0.25).unwrap(), 2.5);
        let t = Distribution::StudentT { df: 3.0, loc: 0.0, scale: 1.0 };
        assert!((t.quantile(0.6).unwrap() - 0.276_670_7).abs() < 1e-6);
        assert!(n.quantile(1.0).is_err());
    }

    #[test]
    fn shifted_moves_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Distribution::Uniform { low: 0.0, high: 1.0 }.shifted(5.0);
        for _ in 0..100 {
            let y = d.sample(&mut rng);
            assert!((5.0..6.0).contains(&y));
        }
        let _: f64 = rng.gen();
    }

    #[test]
    fn estimates_are_reproducible() {
        let scenario = ScenarioSpec {
            horizon: 2000,
            ..ScenarioSpec::in_control(Distribution::standard_normal(), 200, 11)
        };
        let a = estimate_arl(&scenario, &fast_config(0.1)).unwrap();
        let b = estimate_arl(&scenario, &fast_config(0.1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs + a.censored_count, 200);
        assert!(a.mean >= 1.0);
        assert!(a.std_error >= 0.0);
    }

    #[test]
    fn false_alarms_are_rerun() {
        let scenario = ScenarioSpec {
            horizon: 500,
            ..ScenarioSpec::shift(Distribution::standard_normal(), 2.0, 40, 100, 5)
        };
        let est = estimate_arl(&scenario, &fast_config(0.1)).unwrap();
        assert_eq!(est.runs + est.censored_count, 100);
        assert!(est.false_alarms > 0);
        assert!(est.run_lengths.iter().all(|&r| r >= 1));
    }

    #[test]
    fn single_value_sweep_has_one_row() {
        let scenario = ScenarioSpec {
            horizon: 300,
            ..ScenarioSpec::shift(Distribution::standard_normal(), 1.0, 0, 20, 1)
        };
        let rows = sweep_threshold(&scenario, &fast_config(0.05), &[0.5]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].c, 0.5);
    }

    #[test]
    fn gof_accepts_exact_geometric_counts() {
        let alpha = 0.2;
        let n = 10_000.0;
        let mut hist = BTreeMap::new();
        for k in 1..60usize {
            let c = (n * alpha * (1.0f64 - alpha).powi(k as i32 - 1)).round() as u64;
            if c > 0 {
                hist.insert(k, c);
            }
        }
        let (stat, dof, p, bins) = geometric_gof(&hist, 0, alpha).unwrap();
        assert!(dof >= 10);
        assert!(stat < 5.0, "{stat}");
        assert!(p > 0.99);
        assert!(bins.iter().all(|b| b.expected >= 5.0));
        let mut shifted = BTreeMap::new();
        for (k, c) in hist {
            shifted.insert(k + 3, c);
        }
        assert!(geometric_gof(&shifted, 0, alpha).unwrap().2 < 1e-6);
    }

    #[test]
    fn ks_detects_shift_and_accepts_identity() {
        let a: Vec<usize> = (0..500).map(|i| i % 50).collect();
        assert!(ks_two_sample(&a, &a).unwrap().p_value > 0.99);
        let b: Vec<usize> = a.iter().map(|x| x + 10).collect();
        assert!(ks_two_sample(&a, &b).unwrap().p_value < 1e-6);
        assert!(ks_two_sample(&[], &a).is_err());
    }
}
