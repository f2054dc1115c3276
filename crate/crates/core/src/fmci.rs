//! Exact conditional distributions of runs statistics by finite Markov chain
//! imbedding.
//!
//! Given `N_n = M`, the outcomes are a uniformly random arrangement of `M`
//! ones among `n` positions, so the chain on `(count so far, ending block)` is
//! nonhomogeneous: from count `l` at time `t - 1` it emits a one with
//! probability `(M - l) / (n - t + 1)` and a zero with probability
//! `(n - M - (t - 1) + l) / (n - t + 1)`. No success probability appears
//! anywhere, which is why every result here is independent of `p` and of the
//! distribution the bits were derived from.
//!
//! The transition matrices are never built. [`ForwardVector`] holds the mass
//! on feasible states and [`ImbeddedChain::step`] applies the two-branch
//! update directly.
//!
//! For monitoring, the same probabilities are needed for every `(n, m)`.
//! [`SurvivalTable`] produces a whole row `P(E | N_t = j), j = 0..=t` at a time
//! using the count-lift identity
//!
//! ```text
//! q_{t+1}(j, w') = (t+1-j)/(t+1) * sum_{w: <w,0> = w'} q_t(j, w)
//!                +     j/(t+1) * sum_{w: <w,1> = w'} q_t(j-1, w)
//! ```
//!
//! which is the per-block form of
//! `P(E | N_n = m) = (n-m)/n P(E | N_{n-1} = m) + m/n P(E | N_{n-1} = m-1)`.
//! [`SurvivalCache`] memoizes tables per threshold
//! and is safe to share between threads.

use std::collections::{HashMap, VecDeque};
use std::ops::RangeInclusive;
use std::sync::Arc;

use num_rational::BigRational;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pattern::{
    build_ending_blocks, generate_scan_compound, longest_run_pattern, CompoundPattern,
    EndingBlockSpace, Transition,
};
use crate::prob::{Arithmetic, Field, Prob};

/// Which runs statistic a threshold refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StatFamily {
    /// Longest run of ones, `L_n`.
    LongestRun,
    /// Maximum number of ones in any `window` consecutive trials, `S_n(window)`.
    Scan { window: usize },
}

impl StatFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StatFamily::Scan { window: 0 } => Err(invalid("scan window must be at least 1")),
            _ => Ok(()),
        }
    }

    /// Largest value the statistic can take on `n` trials holding `total` ones.
    pub fn max_value(&self, n: usize, total: usize) -> usize {
        match *self {
            StatFamily::LongestRun => total.min(n),
            StatFamily::Scan { window } => total.min(n).min(window),
        }
    }

    /// Compound pattern whose non-occurrence is `{stat < threshold}`.
    /// Errors for `threshold = 0` (the event is empty) and, for scans, for
    /// `threshold > window` (the event is certain).
    pub fn compound(&self, threshold: usize) -> Result<CompoundPattern> {
        match *self {
            StatFamily::LongestRun => longest_run_pattern(threshold),
            StatFamily::Scan { window } => generate_scan_compound(window, threshold),
        }
    }

    /// `Some(p)` when `P(stat < threshold | N_n = total)` is 0 or 1 without
    /// any computation.
    fn trivial_survival(&self, threshold: usize, total: usize) -> Option<bool> {
        if threshold == 0 {
            return Some(false);
        }
        if threshold > total {
            return Some(true);
        }
        if let StatFamily::Scan { window } = *self {
            if threshold > window {
                return Some(true);
            }
        }
        None
    }

    /// `P(stat_n < threshold | N_n = total)` by forward propagation.
    pub fn survival<F: Field>(&self, n: usize, total: usize, threshold: usize) -> Result<F> {
        check_counts(n, total)?;
        self.validate()?;
        match self.trivial_survival(threshold, total) {
            Some(true) => return Ok(F::one()),
            Some(false) => return Ok(F::zero()),
            None => {}
        }
        survival_probability(n, total, &self.compound(threshold)?)
    }
}

fn check_counts(n: usize, total: usize) -> Result<()> {
    if total > n {
        return Err(invalid(format!("total count M = {total} exceeds n = {n}")));
    }
    Ok(())
}

/// A state of the imbedded chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ImbeddedState {
    Transient { count: usize, block: usize },
    Absorbed,
}

/// Probability mass over `(count, block)` at time `t`, plus absorbed mass.
#[derive(Clone, Debug)]
pub struct ForwardVector<F> {
    t: usize,
    total: usize,
    blocks: usize,
    mass: Vec<F>,
    absorbed: F,
}

impl<F: Field> ForwardVector<F> {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn mass(&self, count: usize, block: usize) -> &F {
        &self.mass[count * self.blocks + block]
    }

    pub fn absorbed(&self) -> &F {
        &self.absorbed
    }

    /// Mass on transient states, i.e. the probability that no pattern has
    /// occurred yet.
    pub fn surviving(&self) -> F {
        let mut acc = F::zero();
        for m in &self.mass {
            acc += m.clone();
        }
        acc
    }

    pub fn total_mass(&self) -> F {
        self.surviving() + self.absorbed.clone()
    }

    /// Non-zero transient entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &F)> + '_ {
        self.mass.iter().enumerate().filter_map(move |(i, m)| {
            if m.is_zero() {
                None
            } else {
                Some((i / self.blocks, i % self.blocks, m))
            }
        })
    }

    /// Largest entry index count that still carries mass, or `None`.
    pub fn max_count_with_mass(&self) -> Option<usize> {
        self.iter().map(|(l, _, _)| l).max()
    }

    pub fn len_counts(&self) -> usize {
        self.total + 1
    }
}

/// The chain for `n` trials conditioned on `total` ones, over `ending`.
#[derive(Clone, Copy, Debug)]
pub struct ImbeddedChain<'a> {
    ending: &'a EndingBlockSpace,
    n: usize,
    total: usize,
}

impl<'a> ImbeddedChain<'a> {
    pub fn new(ending: &'a EndingBlockSpace, n: usize, total: usize) -> Result<Self> {
        check_counts(n, total)?;
        Ok(Self { ending, n, total })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Counts `l` reachable at time `t` that can still be completed to `total`.
    pub fn feasible_counts(&self, t: usize) -> RangeInclusive<usize> {
        let low = self.total.saturating_sub(self.n - t.min(self.n));
        let high = t.min(self.total);
        low..=high
    }

    /// Probabilities of emitting `(one, zero)` at time `t` from count `l`.
    fn branches<F: Field>(&self, t: usize, count: usize) -> Result<(Option<F>, Option<F>)> {
        if t == 0 || t > self.n {
            return Err(Error::Invariant(format!(
                "time {t} outside 1..={}",
                self.n
            )));
        }
        let remaining = self.n - t + 1;
        let ones_left = self.total.checked_sub(count);
        let zeros_left = (self.n - self.total + count).checked_sub(t - 1);
        match (ones_left, zeros_left) {
            (Some(ones), Some(zeros)) if ones + zeros == remaining => {
                let one = (ones > 0).then(|| F::ratio(ones as u64, remaining as u64));
                let zero = (zeros > 0).then(|| F::ratio(zeros as u64, remaining as u64));
                Ok((one, zero))
            }
            _ => Err(Error::Invariant(format!(
                "count {count} infeasible at time {} for n = {}, M = {}",
                t - 1,
                self.n,
                self.total
            ))),
        }
    }

    /// Outgoing transitions into time `t` from `(count, block)` at `t - 1`.
    pub fn outgoing<F: Field>(
        &self,
        t: usize,
        count: usize,
        block: usize,
    ) -> Result<Vec<(ImbeddedState, F)>> {
        let (one, zero) = self.branches::<F>(t, count)?;
        let mut out = Vec::with_capacity(2);
        if let Some(p) = one {
            let dest = match self.ending.transition(block, 1) {
                Transition::Absorb => ImbeddedState::Absorbed,
                Transition::To(b) => ImbeddedState::Transient {
                    count: count + 1,
                    block: b,
                },
            };
            out.push((dest, p));
        }
        if let Some(p) = zero {
            let dest = match self.ending.transition(block, 0) {
                Transition::Absorb => ImbeddedState::Absorbed,
                Transition::To(b) => ImbeddedState::Transient { count, block: b },
            };
            out.push((dest, p));
        }
        Ok(out)
    }

    /// Unit mass on `(0, empty block)` at time 0.
    pub fn initial<F: Field>(&self) -> ForwardVector<F> {
        let blocks = self.ending.len();
        let mut mass = vec![F::zero(); (self.total + 1) * blocks];
        mass[EndingBlockSpace::EMPTY] = F::one();
        ForwardVector {
            t: 0,
            total: self.total,
            blocks,
            mass,
            absorbed: F::zero(),
        }
    }

    /// One nonhomogeneous step from time `v.t()` to `v.t() + 1`.
    pub fn step<F: Field>(&self, v: &ForwardVector<F>) -> Result<ForwardVector<F>> {
        if v.total != self.total || v.blocks != self.ending.len() {
            return Err(Error::Invariant("forward vector does not match chain".into()));
        }
        let t = v.t + 1;
        let blocks = v.blocks;
        let mut mass = vec![F::zero(); v.mass.len()];
        let mut absorbed = v.absorbed.clone();
        for l in 0..=self.total {
            let row = &v.mass[l * blocks..(l + 1) * blocks];
            if row.iter().all(|m| m.is_zero()) {
                continue;
            }
            let (one, zero) = self.branches::<F>(t, l)?;
            for (block, m) in row.iter().enumerate() {
                if m.is_zero() {
                    continue;
                }
                if let Some(p) = &one {
                    let flow = m.clone() * p.clone();
                    match self.ending.transition(block, 1) {
                        Transition::Absorb => absorbed += flow,
                        Transition::To(b) => mass[(l + 1) * blocks + b] += flow,
                    }
                }
                if let Some(p) = &zero {
                    let flow = m.clone() * p.clone();
                    match self.ending.transition(block, 0) {
                        Transition::Absorb => absorbed += flow,
                        Transition::To(b) => mass[l * blocks + b] += flow,
                    }
                }
            }
        }
        Ok(ForwardVector {
            t,
            total: self.total,
            blocks,
            mass,
            absorbed,
        })
    }

    /// Vector after `steps` steps from the initial state.
    pub fn propagate<F: Field>(&self, steps: usize) -> Result<ForwardVector<F>> {
        if steps > self.n {
            return Err(invalid(format!("cannot step past n = {}", self.n)));
        }
        let mut v = self.initial();
        for _ in 0..steps {
            v = self.step(&v)?;
        }
        Ok(v)
    }
}

/// `P(no pattern of cp occurs in n trials | N_n = total)`.
pub fn survival_probability<F: Field>(n: usize, total: usize, cp: &CompoundPattern) -> Result<F> {
    let ending = build_ending_blocks(cp);
    let chain = ImbeddedChain::new(&ending, n, total)?;
    Ok(chain.propagate::<F>(n)?.surviving())
}

/// `(P(stat_{n-1} < threshold | N_n = total), P(stat_n < threshold | N_n = total))`
/// from a single run of the `n`-trial chain.
fn two_horizon_survival<F: Field>(
    n: usize,
    total: usize,
    family: StatFamily,
    threshold: usize,
) -> Result<(F, F)> {
    if threshold == 0 {
        return Ok((F::zero(), F::zero()));
    }
    if family.trivial_survival(threshold, total) == Some(true) {
        return Ok((F::one(), F::one()));
    }
    let ending = build_ending_blocks(&family.compound(threshold)?);
    let chain = ImbeddedChain::new(&ending, n, total)?;
    let before = chain.propagate::<F>(n - 1)?;
    let after = chain.step(&before)?;
    Ok((before.surviving(), after.surviving()))
}

/// `P(stat_n = k | N_n = total)` for `k = 0..=upper`, where `upper` is the
/// largest attainable value, capped at `bound` when given.
pub fn statistic_pmf<F: Field>(
    n: usize,
    total: usize,
    family: StatFamily,
    bound: Option<usize>,
) -> Result<Vec<(usize, F)>> {
    check_counts(n, total)?;
    family.validate()?;
    let mut upper = family.max_value(n, total);
    if let Some(b) = bound {
        upper = upper.min(b);
    }
    let mut below = F::zero();
    let mut pmf = Vec::with_capacity(upper + 1);
    for k in 0..=upper {
        let next = family.survival::<F>(n, total, k + 1)?;
        pmf.push((k, next.clone() - below));
        below = next;
    }
    Ok(pmf)
}

/// `P(stat_n = a, stat_{n-1} = b | N_n = total)`.
///
/// Both statistics are nondecreasing and grow by at most one per trial, so
/// the joint CDF is `P(stat_n < x, stat_{n-1} < y) = P(stat_n < x)` when
/// `x <= y` and `P(stat_{n-1} < y)` otherwise. The prefix survival is read
/// off the `n`-trial chain one step before the end.
pub fn joint_two_step<F: Field>(
    n: usize,
    total: usize,
    family: StatFamily,
    a: usize,
    b: usize,
) -> Result<F> {
    if n == 0 {
        return Err(invalid("joint two-step distribution needs n >= 1"));
    }
    check_counts(n, total)?;
    family.validate()?;
    if a < b || a > b + 1 {
        return Ok(F::zero());
    }
    let mut cache: HashMap<usize, (F, F)> = HashMap::new();
    let mut horizon = |threshold: usize| -> Result<(F, F)> {
        if let Some(v) = cache.get(&threshold) {
            return Ok(v.clone());
        }
        let v = two_horizon_survival::<F>(n, total, family, threshold)?;
        cache.insert(threshold, v.clone());
        Ok(v)
    };
    let mut cdf = |x: usize, y: usize| -> Result<F> {
        if x <= y {
            Ok(horizon(x)?.1)
        } else {
            Ok(horizon(y)?.0)
        }
    };
    Ok(cdf(a + 1, b + 1)? - cdf(a, b + 1)? - cdf(a + 1, b)? + cdf(a, b)?)
}

/// `P(E | N_n = m)` from `q_m = P(E | N_{n-1} = m)` and
/// `q_m_minus_one = P(E | N_{n-1} = m - 1)` for an event `E` of the first
/// `n - 1` trials, with weights `(n - m)/n` and `m/n`.
///
/// At `m = 0` only `q_m` is used and at `m = n` only `q_m_minus_one`.
pub fn lift_to_next_count<F: Field>(n: usize, m: usize, q_m: &F, q_m_minus_one: &F) -> Result<F> {
    if n == 0 || m > n {
        return Err(invalid(format!("lift needs 0 <= m <= n and n >= 1, got n = {n}, m = {m}")));
    }
    if m == 0 {
        return Ok(q_m.clone());
    }
    if m == n {
        return Ok(q_m_minus_one.clone());
    }
    let stay = F::ratio((n - m) as u64, n as u64);
    let grow = F::ratio(m as u64, n as u64);
    Ok(stay * q_m.clone() + grow * q_m_minus_one.clone())
}

/// How many rows a [`SurvivalTable`] keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Retention {
    #[default]
    All,
    /// Keep only the newest `keep` rows. Queries for an evicted row rebuild
    /// the table from row 0.
    Sliding { keep: usize },
}

/// `P(no pattern in the first t trials | N_t = j)` for all `0 <= j <= t`,
/// extended one row at a time.
#[derive(Clone, Debug)]
pub struct SurvivalTable<F> {
    ending: EndingBlockSpace,
    t: usize,
    /// `q_t(j, block)` for `j = 0..=t`, row-major by `j`.
    state: Vec<F>,
    rows: VecDeque<Vec<F>>,
    first_row: usize,
    retention: Retention,
}

impl<F: Field> SurvivalTable<F> {
    pub fn new(cp: &CompoundPattern, retention: Retention) -> Self {
        let ending = build_ending_blocks(cp);
        let mut state = vec![F::zero(); ending.len()];
        state[EndingBlockSpace::EMPTY] = F::one();
        Self {
            ending,
            t: 0,
            state,
            rows: VecDeque::from([vec![F::one()]]),
            first_row: 0,
            retention,
        }
    }

    fn reset(&mut self) {
        let blocks = self.ending.len();
        self.t = 0;
        self.state = vec![F::zero(); blocks];
        self.state[EndingBlockSpace::EMPTY] = F::one();
        self.rows = VecDeque::from([vec![F::one()]]);
        self.first_row = 0;
    }

    /// Last computed row.
    pub fn rows_computed(&self) -> usize {
        self.t
    }

    fn advance(&mut self) {
        let blocks = self.ending.len();
        let t1 = self.t + 1;
        let mut next = vec![F::zero(); (t1 + 1) * blocks];
        for j in 0..=t1 {
            // zero branch keeps the count
            if j <= self.t {
                let w = F::ratio((t1 - j) as u64, t1 as u64);
                for block in 0..blocks {
                    let q = &self.state[j * blocks + block];
                    if q.is_zero() {
                        continue;
                    }
                    if let Transition::To(b) = self.ending.transition(block, 0) {
                        next[j * blocks + b] += w.clone() * q.clone();
                    }
                }
            }
            // one branch comes from count j - 1
            if j >= 1 {
                let w = F::ratio(j as u64, t1 as u64);
                for block in 0..blocks {
                    let q = &self.state[(j - 1) * blocks + block];
                    if q.is_zero() {
                        continue;
                    }
                    if let Transition::To(b) = self.ending.transition(block, 1) {
                        next[j * blocks + b] += w.clone() * q.clone();
                    }
                }
            }
        }
        let row = next
            .chunks(blocks)
            .map(|chunk| {
                let mut acc = F::zero();
                for q in chunk {
                    acc += q.clone();
                }
                acc
            })
            .collect();
        self.state = next;
        self.t = t1;
        self.rows.push_back(row);
        if let Retention::Sliding { keep } = self.retention {
            let keep = keep.max(1);
            while self.rows.len() > keep {
                self.rows.pop_front();
                self.first_row += 1;
            }
        }
    }

    /// Makes row `n` available.
    pub fn extend_to(&mut self, n: usize) {
        if n < self.first_row {
            self.reset();
        }
        while self.t < n {
            self.advance();
        }
    }

    /// Row `n`, entry `m`, if computed and retained.
    pub fn get(&self, n: usize, m: usize) -> Option<&F> {
        if n < self.first_row || n > self.t || m > n {
            return None;
        }
        self.rows[n - self.first_row].get(m)
    }

    pub fn survival(&mut self, n: usize, m: usize) -> Result<F> {
        check_counts(n, m)?;
        self.extend_to(n);
        self.get(n, m)
            .cloned()
            .ok_or_else(|| Error::Invariant(format!("row {n} missing after extension")))
    }
}

type TableMap<F> = RwLock<HashMap<usize, Arc<RwLock<SurvivalTable<F>>>>>;

/// Memoized `P(stat_n < threshold | N_n = m)` for one statistic family.
///
/// Reads take shared locks; extending a table takes an exclusive lock on that
/// table only. Exact and double-precision tables are kept separately and the
/// [`Arithmetic`] mode picks one per `n`.
#[derive(Debug)]
pub struct SurvivalCache {
    family: StatFamily,
    arithmetic: Arithmetic,
    retention: Retention,
    exact: TableMap<BigRational>,
    float: TableMap<f64>,
}

impl SurvivalCache {
    pub fn new(family: StatFamily, arithmetic: Arithmetic) -> Result<Self> {
        Self::with_retention(family, arithmetic, Retention::All)
    }

    pub fn with_retention(
        family: StatFamily,
        arithmetic: Arithmetic,
        retention: Retention,
    ) -> Result<Self> {
        family.validate()?;
        Ok(Self {
            family,
            arithmetic,
            retention,
            exact: RwLock::new(HashMap::new()),
            float: RwLock::new(HashMap::new()),
        })
    }

    pub fn family(&self) -> StatFamily {
        self.family
    }

    pub fn arithmetic(&self) -> Arithmetic {
        self.arithmetic
    }

    fn lookup<F: Field>(
        &self,
        map: &TableMap<F>,
        row: usize,
        m: usize,
        threshold: usize,
    ) -> Result<F> {
        let existing = map.read().get(&threshold).cloned();
        let table = match existing {
            Some(t) => t,
            None => {
                let cp = self.family.compound(threshold)?;
                let mut guard = map.write();
                guard
                    .entry(threshold)
                    .or_insert_with(|| Arc::new(RwLock::new(SurvivalTable::new(&cp, self.retention))))
                    .clone()
            }
        };
        if let Some(v) = table.read().get(row, m) {
            return Ok(v.clone());
        }
        let value = table.write().survival(row, m);
        value
    }

    fn survival_at(&self, row: usize, m: usize, threshold: usize, exact: bool) -> Result<Prob> {
        check_counts(row, m)?;
        if let Some(certain) = self.family.trivial_survival(threshold, m) {
            return Ok(if certain {
                Prob::one(exact)
            } else {
                Prob::zero(exact)
            });
        }
        if exact {
            Ok(Prob::Exact(self.lookup(&self.exact, row, m, threshold)?))
        } else {
            Ok(Prob::Float(self.lookup(&self.float, row, m, threshold)?))
        }
    }

    /// `P(stat_n < threshold | N_n = m)`.
    pub fn survival(&self, n: usize, m: usize, threshold: usize) -> Result<Prob> {
        self.survival_at(n, m, threshold, self.arithmetic.exact_at(n))
    }

    /// `P(stat_{n-1} < threshold | N_n = m)`, lifted from the `n - 1` row.
    /// Uses the arithmetic of `n`.
    pub fn prefix_survival(&self, n: usize, m: usize, threshold: usize) -> Result<Prob> {
        if n == 0 {
            return Err(invalid("prefix survival needs n >= 1"));
        }
        check_counts(n, m)?;
        let exact = self.arithmetic.exact_at(n);
        let q_m = if m < n {
            self.survival_at(n - 1, m, threshold, exact)?
        } else {
            Prob::zero(exact)
        };
        let q_prev = if m > 0 {
            self.survival_at(n - 1, m - 1, threshold, exact)?
        } else {
            Prob::zero(exact)
        };
        if m == 0 {
            return Ok(q_m);
        }
        if m == n {
            return Ok(q_prev);
        }
        let stay = Prob::Exact(<BigRational as Field>::ratio((n - m) as u64, n as u64));
        let grow = Prob::Exact(<BigRational as Field>::ratio(m as u64, n as u64));
        Ok(stay * q_m + grow * q_prev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rational;

    #[test]
    fn longest_run_worked_example_is_seven_tenths() {
        let cp = longest_run_pattern(3).unwrap();
        let p: BigRational = survival_probability(5, 3, &cp).unwrap();
        assert_eq!(p, rational(7, 10));
        let f: f64 = survival_probability(5, 3, &cp).unwrap();
        assert!((f - 0.7).abs() < 1e-12);
    }

    #[test]
    fn scan_three_two_with_two_ones() {
        // pairs at distance >= 3 among 5 positions: (1,4), (1,5), (2,5)
        let cp = generate_scan_compound(3, 2).unwrap();
        let p: BigRational = survival_probability(5, 2, &cp).unwrap();
        assert_eq!(p, rational(3, 10));
    }

    #[test]
    fn first_step_branch_probabilities() {
        let ending = build_ending_blocks(&longest_run_pattern(3).unwrap());
        let chain = ImbeddedChain::new(&ending, 5, 3).unwrap();
        let out = chain.outgoing::<BigRational>(1, 0, EndingBlockSpace::EMPTY).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].1, rational(3, 5));
        assert_eq!(out[1].1, rational(2, 5));
    }

    #[test]
    fn all_ones_and_all_zeros_are_deterministic() {
        let ending = build_ending_blocks(&longest_run_pattern(4).unwrap());
        let full = ImbeddedChain::new(&ending, 6, 6).unwrap();
        let empty = ImbeddedChain::new(&ending, 6, 0).unwrap();
        let mut v = full.initial::<BigRational>();
        let mut w = empty.initial::<BigRational>();
        for t in 1..=6 {
            for (l, b, _) in v.iter() {
                let out = full.outgoing::<BigRational>(t, l, b).unwrap();
                assert_eq!(out.len(), 1);
                assert_eq!(out[0].1, rational(1, 1));
            }
            for (l, b, _) in w.iter() {
                let out = empty.outgoing::<BigRational>(t, l, b).unwrap();
                assert_eq!(out.len(), 1);
                assert_eq!(out[0].1, rational(1, 1));
            }
            v = full.step(&v).unwrap();
            w = empty.step(&w).unwrap();
        }
        assert_eq!(v.surviving(), rational(0, 1));
        assert_eq!(w.surviving(), rational(1, 1));
    }

    #[test]
    fn fewer_ones_than_threshold_survive_surely() {
        let p: BigRational = StatFamily::Scan { window: 4 }.survival(9, 2, 3).unwrap();
        assert_eq!(p, rational(1, 1));
    }

    #[test]
    fn rejects_total_above_n() {
        let cp = longest_run_pattern(2).unwrap();
        assert!(survival_probability::<f64>(3, 4, &cp).is_err());
    }

    #[test]
    fn pmf_for_five_three_longest_run() {
        let pmf = statistic_pmf::<BigRational>(5, 3, StatFamily::LongestRun, None).unwrap();
        let total = pmf
            .iter()
            .fold(rational(0, 1), |acc, (_, p)| acc + p.clone());
        assert_eq!(total, rational(1, 1));
        let at = |k: usize| pmf.iter().find(|(v, _)| *v == k).unwrap().1.clone();
        assert_eq!(at(3), rational(3, 10));
        assert_eq!(at(0), rational(0, 1));
        assert_eq!(at(1) + at(2), rational(7, 10));
    }

    #[test]
    fn joint_is_zero_below_diagonal_and_sums_to_one() {
        let family = StatFamily::LongestRun;
        assert_eq!(
            joint_two_step::<BigRational>(5, 3, family, 1, 2).unwrap(),
            rational(0, 1)
        );
        let mut total = rational(0, 1);
        for a in 0..=5 {
            for b in 0..=5 {
                total += joint_two_step::<BigRational>(5, 3, family, a, b).unwrap();
            }
        }
        assert_eq!(total, rational(1, 1));
    }

    #[test]
    fn lift_boundaries_and_weights() {
        let q = rational(1, 3);
        let r = rational(1, 2);
        assert_eq!(lift_to_next_count(5, 0, &q, &r).unwrap(), q);
        assert_eq!(lift_to_next_count(5, 5, &q, &r).unwrap(), r);
        let mixed = lift_to_next_count(5, 3, &q, &r).unwrap();
        assert_eq!(mixed, rational(2, 5) * q.clone() + rational(3, 5) * r.clone());
        assert!(lift_to_next_count(5, 6, &q, &r).is_err());
    }

    #[test]
    fn table_matches_chain_for_small_grid() {
        for d in 1..=4 {
            let cp = longest_run_pattern(d).unwrap();
            let mut table = SurvivalTable::<BigRational>::new(&cp, Retention::All);
            for n in 0..=9 {
                for m in 0..=n {
                    let direct: BigRational = survival_probability(n, m, &cp).unwrap();
                    assert_eq!(table.survival(n, m).unwrap(), direct, "d={d} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn sliding_table_rebuilds_evicted_rows() {
        let cp = generate_scan_compound(3, 2).unwrap();
        let mut table = SurvivalTable::<BigRational>::new(&cp, Retention::Sliding { keep: 2 });
        let late = table.survival(10, 4).unwrap();
        assert!(table.get(5, 2).is_none());
        let early = table.survival(5, 2).unwrap();
        assert_eq!(early, survival_probability::<BigRational>(5, 2, &cp).unwrap());
        assert_eq!(table.survival(10, 4).unwrap(), late);
    }

    #[test]
    fn cache_prefix_survival_matches_two_horizon_chain() {
        let cache = SurvivalCache::new(StatFamily::LongestRun, Arithmetic::Exact).unwrap();
        for n in 1..=8 {
            for m in 0..=n {
                for thr in 0..=4 {
                    let (prefix, _) =
                        two_horizon_survival::<BigRational>(n, m, StatFamily::LongestRun, thr)
                            .unwrap();
                    let lifted = cache.prefix_survival(n, m, thr).unwrap();
                    assert_eq!(lifted.exact().unwrap(), &prefix, "n={n} m={m} thr={thr}");
                }
            }
        }
    }

    #[test]
    fn auto_cache_switches_representation() {
        let cache =
            SurvivalCache::new(StatFamily::LongestRun, Arithmetic::Auto { exact_max_n: 10 }).unwrap();
        assert!(cache.survival(10, 5, 3).unwrap().is_exact());
        let late = cache.survival(11, 5, 3).unwrap();
        assert!(!late.is_exact());
        let exact: BigRational = StatFamily::LongestRun.survival(11, 5, 3).unwrap();
        assert!((late.to_f64() - Field::to_f64(&exact)).abs() < 1e-14);
    }
}
