//! Runs-rule charts with data-dependent limits.
//!
//! Observations are binarized against a cutoff `c` and the chart monitors
//! either the scan statistic (rule R1) or the longest run (rule R2). At each
//! monitored time `n` the limit `k_n` and randomization probability `nu_n` are
//! chosen from the conditional distribution given `N_n = m`, so the chart
//! never needs the in-control distribution of the observations.
//!
//! A step signals when `stat > k_n`, or when `stat = k_n` and a uniform coin
//! falls below `nu_n`. The first monitored step solves the unconditional
//! equation `P(stat > k) + nu P(stat = k) = alpha`. Later steps condition on
//! acceptance at the previous step:
//!
//! ```text
//! level = (E[phi_n] - E[phi_n phi_{n-1}]) / E[1 - phi_{n-1}]   given N_n = m
//! ```
//!
//! with `k_n` restricted to `{k_{n-1}, k_{n-1} + 1}`. The level is linear in
//! `nu_n`, so the solve is closed form. When even `nu_n = 1` leaves the level
//! below `alpha` the step is reported as [`LevelStatus::Saturated`].

use std::collections::VecDeque;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fmci::{Retention, StatFamily, SurvivalCache};
use crate::prob::{Arithmetic, Prob};

/// Float slack used only when the arithmetic is inexact.
const FLOAT_SLACK: f64 = 1e-12;

/// Which statistic the chart monitors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Rule {
    /// Scan statistic over the last `window` bits.
    R1 { window: usize },
    /// Longest run of ones.
    R2,
}

impl Rule {
    pub fn family(&self) -> StatFamily {
        match *self {
            Rule::R1 { window } => StatFamily::Scan { window },
            Rule::R2 => StatFamily::LongestRun,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartConfig {
    pub rule: Rule,
    pub alpha: f64,
    pub threshold_c: f64,
    pub startup_nu: usize,
    pub randomize: bool,
    pub seed: u64,
    pub arithmetic: Arithmetic,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            rule: Rule::R2,
            alpha: 0.005,
            threshold_c: 0.0,
            startup_nu: 10,
            randomize: true,
            seed: 0,
            arithmetic: Arithmetic::default(),
        }
    }
}

impl ChartConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.startup_nu < 1 {
            return Err(invalid("startup_nu must be at least 1"));
        }
        if !self.threshold_c.is_finite() {
            return Err(invalid("binarization cutoff must be finite"));
        }
        if let Rule::R1 { window: 0 } = self.rule {
            return Err(invalid("R1 window must be at least 1"));
        }
        Ok(())
    }

    /// Cutoff suggested for detecting a mean shift of `mu`: `c = mu - 1`.
    pub fn threshold_for_shift(mu: f64) -> f64 {
        mu - 1.0
    }
}

/// `1` if `y >= c`.
pub fn binarize(y: f64, c: f64) -> Result<u8> {
    if !y.is_finite() {
        return Err(Error::NonFiniteObservation(y));
    }
    Ok(u8::from(y >= c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelStatus {
    /// Attained level equals `alpha`.
    Exact,
    /// Attained level below `alpha` because randomization is off or the
    /// boundary value has no mass.
    Conservative,
    /// `alpha` unattainable within the step constraint; `nu_n` clamped to 1.
    Saturated,
    /// Acceptance at the previous step has probability zero given `N_n`; the
    /// previous limit is carried forward without randomization.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSolution {
    pub limit: usize,
    pub rand_prob: Prob,
    /// Attained conditional signal probability, `None` when degenerate.
    pub level: Option<Prob>,
    pub status: LevelStatus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Exceed,
    Randomized,
}

/// One processed observation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: usize,
    pub y: Option<f64>,
    pub bit: u8,
    pub count: usize,
    pub stat: usize,
    pub limit: Option<usize>,
    pub nu: Option<Prob>,
    pub level: Option<Prob>,
    pub status: Option<LevelStatus>,
    pub signal: Option<SignalKind>,
}

/// Outcome of one monitored sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunLengthRecord {
    /// Signal time, `None` when censored.
    pub rl: Option<usize>,
    pub observations: usize,
    pub startup_nu: usize,
    /// `k_n` for `n = startup_nu, startup_nu + 1, ...`.
    pub limit_trajectory: Vec<usize>,
    /// Statistic value for `n = 1, 2, ...`.
    pub stat_trajectory: Vec<usize>,
    pub signal_kind: Option<SignalKind>,
}

impl RunLengthRecord {
    pub fn censored(&self) -> bool {
        self.rl.is_none()
    }

    /// Run length counted from the first monitored step.
    pub fn monitored_run_length(&self) -> Option<usize> {
        self.rl.map(|rl| rl + 1 - self.startup_nu)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Update {
    InControl(StepRecord),
    Signal(StepRecord, RunLengthRecord),
}

impl Update {
    pub fn record(&self) -> &StepRecord {
        match self {
            Update::InControl(r) | Update::Signal(r, _) => r,
        }
    }
}

/// Limit solver for one configuration, shared by any number of charts.
#[derive(Debug)]
pub struct ChartEngine {
    config: ChartConfig,
    cache: SurvivalCache,
}

/// Coefficients of the level `(a + nu * b) / d`.
struct Coefficients {
    a: Prob,
    b: Prob,
    d: Prob,
}

impl ChartEngine {
    pub fn new(config: ChartConfig) -> Result<Self> {
        Self::with_retention(config, Retention::All)
    }

    pub fn with_retention(config: ChartConfig, retention: Retention) -> Result<Self> {
        config.validate()?;
        let cache = SurvivalCache::with_retention(config.rule.family(), config.arithmetic, retention)?;
        Ok(Self { config, cache })
    }

    pub fn config(&self) -> &ChartConfig {
        &self.config
    }

    pub fn cache(&self) -> &SurvivalCache {
        &self.cache
    }

    fn exact(&self, n: usize) -> bool {
        self.config.arithmetic.exact_at(n)
    }

    fn alpha(&self, n: usize) -> Result<Prob> {
        Prob::from_f64(self.config.alpha, self.exact(n))
    }

    /// `P(stat_n < x | N_n = m)`.
    fn below(&self, n: usize, m: usize, x: usize) -> Result<Prob> {
        self.cache.survival(n, m, x)
    }

    /// `P(stat_{n-1} < y | N_n = m)`.
    fn prefix_below(&self, n: usize, m: usize, y: usize) -> Result<Prob> {
        self.cache.prefix_survival(n, m, y)
    }

    /// `P(stat_n < x, stat_{n-1} < y | N_n = m)`.
    fn joint_below(&self, n: usize, m: usize, x: usize, y: usize) -> Result<Prob> {
        if x <= y {
            self.below(n, m, x)
        } else {
            self.prefix_below(n, m, y)
        }
    }

    /// `P(stat_n > x | N_n = m)`.
    fn above(&self, n: usize, m: usize, x: usize) -> Result<Prob> {
        Ok(Prob::one(self.exact(n)) - self.below(n, m, x + 1)?)
    }

    /// `P(stat_n = x | N_n = m)`.
    fn at(&self, n: usize, m: usize, x: usize) -> Result<Prob> {
        Ok(self.below(n, m, x + 1)? - self.below(n, m, x)?)
    }

    fn prefix_above(&self, n: usize, m: usize, y: usize) -> Result<Prob> {
        Ok(Prob::one(self.exact(n)) - self.prefix_below(n, m, y + 1)?)
    }

    fn prefix_at(&self, n: usize, m: usize, y: usize) -> Result<Prob> {
        Ok(self.prefix_below(n, m, y + 1)? - self.prefix_below(n, m, y)?)
    }

    /// `P(stat_n > x, stat_{n-1} > y | N_n = m)`.
    fn joint_above(&self, n: usize, m: usize, x: usize, y: usize) -> Result<Prob> {
        Ok(Prob::one(self.exact(n)) - self.below(n, m, x + 1)? - self.prefix_below(n, m, y + 1)?
            + self.joint_below(n, m, x + 1, y + 1)?)
    }

    /// `P(stat_n = a, stat_{n-1} = b | N_n = m)`.
    fn joint_at(&self, n: usize, m: usize, a: usize, b: usize) -> Result<Prob> {
        Ok(self.joint_below(n, m, a + 1, b + 1)? - self.joint_below(n, m, a, b + 1)?
            - self.joint_below(n, m, a + 1, b)?
            + self.joint_below(n, m, a, b)?)
    }

    /// `[P(> k_n, > k'), P(= k_n, > k'), P(> k_n, = k'), P(= k_n, = k')]` for
    /// `(stat_n, stat_{n-1})`, using the two admissible cases of the step
    /// constraint.
    pub fn joint_terms(
        &self,
        n: usize,
        m: usize,
        limit_n: usize,
        limit_prev: usize,
    ) -> Result<[Prob; 4]> {
        let k = limit_prev;
        let zero = Prob::zero(self.exact(n));
        if limit_n == k {
            let gt_gt = self.prefix_above(n, m, k)?;
            let eq_gt = zero;
            let gt_eq = if k == 0 {
                self.above(n, m, k)? - self.prefix_above(n, m, k)?
            } else {
                self.joint_above(n, m, k, k - 1)? - self.prefix_above(n, m, k)?
            };
            let eq_eq = self.joint_at(n, m, k, k)?;
            Ok([gt_gt, eq_gt, gt_eq, eq_eq])
        } else if limit_n == k + 1 {
            let gt_gt = self.joint_above(n, m, k + 1, k)?;
            let eq_gt = self.prefix_above(n, m, k)? - gt_gt.clone();
            let gt_eq = zero;
            let eq_eq = self.joint_at(n, m, k + 1, k)?;
            Ok([gt_gt, eq_gt, gt_eq, eq_eq])
        } else {
            Err(invalid(format!(
                "limit {limit_n} violates the step constraint from {limit_prev}"
            )))
        }
    }

    fn coefficients(
        &self,
        n: usize,
        m: usize,
        limit_n: usize,
        limit_prev: usize,
        rand_prev: &Prob,
    ) -> Result<Coefficients> {
        let [gt_gt, eq_gt, gt_eq, eq_eq] = self.joint_terms(n, m, limit_n, limit_prev)?;
        let a = self.above(n, m, limit_n)? - gt_gt - rand_prev * &gt_eq;
        let b = self.at(n, m, limit_n)? - eq_gt - rand_prev * &eq_eq;
        let d = self.acceptance(n, m, limit_prev, rand_prev)?;
        Ok(Coefficients { a, b, d })
    }

    /// `E[1 - phi_{n-1} | N_n = m]`.
    fn acceptance(&self, n: usize, m: usize, limit_prev: usize, rand_prev: &Prob) -> Result<Prob> {
        Ok(Prob::one(self.exact(n))
            - self.prefix_above(n, m, limit_prev)?
            - rand_prev * &self.prefix_at(n, m, limit_prev)?)
    }

    fn check_step(&self, n: usize, m: usize) -> Result<()> {
        if n < 2 || m > n {
            return Err(invalid(format!(
                "conditional step needs 2 <= n and m <= n, got n = {n}, m = {m}"
            )));
        }
        Ok(())
    }

    /// `P(stat_n < limit_n | stat_{n-1} < limit_prev, N_n = m)`.
    pub fn conditional_no_signal_probability(
        &self,
        n: usize,
        m: usize,
        limit_n: usize,
        limit_prev: usize,
    ) -> Result<Prob> {
        self.check_step(n, m)?;
        if limit_n > limit_prev {
            return Ok(Prob::one(self.exact(n)));
        }
        let denominator = self.prefix_below(n, m, limit_prev)?;
        if !is_positive(&denominator) {
            return Err(Error::ImpossibleConditioning { n, m });
        }
        Ok(self.joint_below(n, m, limit_n, limit_prev)? / denominator)
    }

    /// Conditional rejection probability of the randomized pair of tests at
    /// `n` and `n - 1`, given acceptance at `n - 1` and `N_n = m`.
    pub fn randomized_signal_level(
        &self,
        n: usize,
        m: usize,
        limit_n: usize,
        rand_n: &Prob,
        limit_prev: usize,
        rand_prev: &Prob,
    ) -> Result<Prob> {
        self.check_step(n, m)?;
        let c = self.coefficients(n, m, limit_n, limit_prev, rand_prev)?;
        if !is_positive(&c.d) {
            return Err(Error::ImpossibleConditioning { n, m });
        }
        Ok((c.a + rand_n * &c.b) / c.d)
    }

    /// Limit and randomization probability at time `n` with `m` ones seen.
    /// `prev` is `(k_{n-1}, nu_{n-1})`, or `None` on the first monitored step.
    pub fn solve_limit(
        &self,
        n: usize,
        m: usize,
        prev: Option<(usize, &Prob)>,
    ) -> Result<LimitSolution> {
        if m > n {
            return Err(invalid(format!("count {m} exceeds n = {n}")));
        }
        let exact = self.exact(n);
        let alpha = self.alpha(n)?;
        match prev {
            None => {
                let mut k = 1;
                loop {
                    let a = self.above(n, m, k)?;
                    if within(&a, &alpha, exact) {
                        let b = self.at(n, m, k)?;
                        return Ok(self.finish(k, a, b, Prob::one(exact), &alpha, exact));
                    }
                    k += 1;
                }
            }
            Some((limit_prev, rand_prev)) => {
                self.check_step(n, m)?;
                let d = self.acceptance(n, m, limit_prev, rand_prev)?;
                if !is_positive(&d) {
                    return Ok(LimitSolution {
                        limit: limit_prev,
                        rand_prob: Prob::zero(exact),
                        level: None,
                        status: LevelStatus::Degenerate,
                    });
                }
                let bound = &alpha * &d;
                for limit in [limit_prev, limit_prev + 1] {
                    let c = self.coefficients(n, m, limit, limit_prev, rand_prev)?;
                    if within(&c.a, &bound, exact) {
                        return Ok(self.finish(limit, c.a, c.b, c.d, &alpha, exact));
                    }
                }
                Err(Error::Invariant(format!(
                    "no admissible limit at n = {n}, m = {m} from k = {limit_prev}"
                )))
            }
        }
    }

    fn finish(&self, limit: usize, a: Prob, b: Prob, d: Prob, alpha: &Prob, exact: bool) -> LimitSolution {
        let zero = Prob::zero(exact);
        let one = Prob::one(exact);
        let (rand_prob, status) = if !self.config.randomize || !is_positive(&b) {
            (zero, LevelStatus::Conservative)
        } else {
            let nu = (alpha * &d - a.clone()) / b.clone();
            if nu > one {
                (one, LevelStatus::Saturated)
            } else if nu.is_negative() {
                (zero, LevelStatus::Exact)
            } else {
                (nu, LevelStatus::Exact)
            }
        };
        let level = (a + &rand_prob * &b) / d;
        let status = match status {
            LevelStatus::Conservative if level == *alpha => LevelStatus::Exact,
            s => s,
        };
        LimitSolution {
            limit,
            rand_prob,
            level: Some(level),
            status,
        }
    }
}

fn is_positive(p: &Prob) -> bool {
    !p.is_zero() && !p.is_negative()
}

fn within(value: &Prob, bound: &Prob, exact: bool) -> bool {
    if exact && value.is_exact() && bound.is_exact() {
        value <= bound
    } else {
        value.to_f64() <= bound.to_f64() + FLOAT_SLACK
    }
}

#[derive(Clone)]
enum Tracker {
    Run { current: usize, longest: usize },
    Scan { window: usize, recent: VecDeque<u8>, inside: usize, best: usize },
}

impl Tracker {
    fn new(rule: Rule) -> Self {
        match rule {
            Rule::R2 => Tracker::Run { current: 0, longest: 0 },
            Rule::R1 { window } => Tracker::Scan {
                window,
                recent: VecDeque::with_capacity(window + 1),
                inside: 0,
                best: 0,
            },
        }
    }

    fn push(&mut self, bit: u8) -> usize {
        match self {
            Tracker::Run { current, longest } => {
                *current = if bit == 1 { *current + 1 } else { 0 };
                *longest = (*longest).max(*current);
                *longest
            }
            Tracker::Scan { window, recent, inside, best } => {
                recent.push_back(bit);
                *inside += usize::from(bit);
                if recent.len() > *window {
                    *inside -= usize::from(recent.pop_front().unwrap_or(0));
                }
                *best = (*best).max(*inside);
                *best
            }
        }
    }
}

/// A single chart processing observations in order.
#[derive(Debug)]
pub struct ChartState {
    engine: Arc<ChartEngine>,
    rng: ChaCha8Rng,
    t: usize,
    count: usize,
    stat: usize,
    tracker: Tracker,
    limits: Vec<usize>,
    rand_probs: Vec<Prob>,
    stats: Vec<usize>,
    alarmed: Option<usize>,
}

impl std::fmt::Debug for Tracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tracker::Run { longest, .. } => write!(f, "Run({longest})"),
            Tracker::Scan { best, .. } => write!(f, "Scan({best})"),
        }
    }
}

impl ChartState {
    /// Chart whose coin stream is seeded from the configuration.
    pub fn new(engine: Arc<ChartEngine>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(engine.config().seed);
        Self::with_rng(engine, rng)
    }

    pub fn with_rng(engine: Arc<ChartEngine>, rng: ChaCha8Rng) -> Self {
        let rule = engine.config().rule;
        Self {
            engine,
            rng,
            t: 0,
            count: 0,
            stat: 0,
            tracker: Tracker::new(rule),
            limits: Vec::new(),
            rand_probs: Vec::new(),
            stats: Vec::new(),
            alarmed: None,
        }
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn stat(&self) -> usize {
        self.stat
    }

    pub fn limits(&self) -> &[usize] {
        &self.limits
    }

    pub fn rand_probs(&self) -> &[Prob] {
        &self.rand_probs
    }

    pub fn alarmed(&self) -> bool {
        self.alarmed.is_some()
    }

    pub fn update(&mut self, y: f64) -> Result<Update> {
        if let Some(t) = self.alarmed {
            return Err(Error::AlreadySignalled(t));
        }
        let bit = binarize(y, self.engine.config().threshold_c)?;
        self.advance(bit, Some(y))
    }

    pub fn update_bit(&mut self, bit: u8) -> Result<Update> {
        if let Some(t) = self.alarmed {
            return Err(Error::AlreadySignalled(t));
        }
        if bit > 1 {
            return Err(invalid(format!("bit must be 0 or 1, got {bit}")));
        }
        self.advance(bit, None)
    }

    /// Processes one bit regardless of earlier signals.
    fn step(&mut self, bit: u8, y: Option<f64>) -> Result<StepRecord> {
        self.t += 1;
        self.count += usize::from(bit);
        self.stat = self.tracker.push(bit);
        self.stats.push(self.stat);
        let mut record = StepRecord {
            t: self.t,
            y,
            bit,
            count: self.count,
            stat: self.stat,
            limit: None,
            nu: None,
            level: None,
            status: None,
            signal: None,
        };
        if self.t < self.engine.config().startup_nu {
            return Ok(record);
        }
        let prev = self.limits.last().copied().zip(self.rand_probs.last());
        let solution = self.engine.solve_limit(self.t, self.count, prev)?;
        let signal = if self.stat > solution.limit {
            Some(SignalKind::Exceed)
        } else if self.stat == solution.limit {
            let u: f64 = self.rng.gen();
            (u < solution.rand_prob.to_f64()).then_some(SignalKind::Randomized)
        } else {
            None
        };
        self.limits.push(solution.limit);
        self.rand_probs.push(solution.rand_prob.clone());
        record.limit = Some(solution.limit);
        record.nu = Some(solution.rand_prob);
        record.level = solution.level;
        record.status = Some(solution.status);
        record.signal = signal;
        Ok(record)
    }

    fn advance(&mut self, bit: u8, y: Option<f64>) -> Result<Update> {
        let record = self.step(bit, y)?;
        match record.signal {
            Some(kind) => {
                self.alarmed = Some(self.t);
                let rl = self.run_length_record(Some(kind));
                Ok(Update::Signal(record, rl))
            }
            None => Ok(Update::InControl(record)),
        }
    }

    /// Record for the sequence so far; censored unless a signal occurred.
    pub fn run_length_record(&self, kind: Option<SignalKind>) -> RunLengthRecord {
        RunLengthRecord {
            rl: self.alarmed,
            observations: self.t,
            startup_nu: self.engine.config().startup_nu,
            limit_trajectory: self.limits.clone(),
            stat_trajectory: self.stats.clone(),
            signal_kind: kind,
        }
    }
}

/// Runs a chart over observations until the first signal.
pub fn run_length(observations: &[f64], engine: Arc<ChartEngine>) -> Result<RunLengthRecord> {
    let mut chart = ChartState::new(engine);
    for &y in observations {
        if let Update::Signal(_, rl) = chart.update(y)? {
            return Ok(rl);
        }
    }
    Ok(chart.run_length_record(None))
}

/// Runs a chart over already binarized data until the first signal.
pub fn run_length_bits(bits: &[u8], engine: Arc<ChartEngine>) -> Result<RunLengthRecord> {
    let mut chart = ChartState::new(engine);
    for &bit in bits {
        if let Update::Signal(_, rl) = chart.update_bit(bit)? {
            return Ok(rl);
        }
    }
    Ok(chart.run_length_record(None))
}

/// Every step of the limit recursion over `bits`, continuing past signals.
pub fn limit_trajectory(bits: &[u8], engine: Arc<ChartEngine>) -> Result<Vec<StepRecord>> {
    let mut chart = ChartState::new(engine);
    bits.iter()
        .map(|&bit| {
            if bit > 1 {
                return Err(invalid(format!("bit must be 0 or 1, got {bit}")));
            }
            chart.step(bit, None)
        })
        .collect()
}
