//! Ground truth by exhaustive enumeration.
//!
//! Every arrangement of `m` ones among `n` positions is equally likely given
//! `N_n = m`, so conditional probabilities are plain ratios of counts. The
//! statistics are evaluated directly on each arrangement with no automaton or
//! chain involved. Instances are limited by an enumeration budget on
//! `C(n, m)`.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fmci::{StatFamily, SurvivalTable, Retention};
use crate::pattern::binomial;
use crate::prob::Field;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Statistic of `bits` computed by direct scanning.
pub fn statistic(bits: &[u8], family: StatFamily) -> usize {
    match family {
        StatFamily::LongestRun => {
            let mut best = 0;
            let mut run = 0;
            for &b in bits {
                run = if b == 1 { run + 1 } else { 0 };
                best = best.max(run);
            }
            best
        }
        StatFamily::Scan { window } => {
            if bits.is_empty() {
                return 0;
            }
            let width = window.min(bits.len()).max(1);
            bits.windows(width)
                .map(|w| w.iter().filter(|&&b| b == 1).count())
                .max()
                .unwrap_or(0)
        }
    }
}

fn arrangements_count(n: usize, m: usize, budget: u64) -> Result<u64> {
    if m > n {
        return Err(invalid(format!("m = {m} exceeds n = {n}")));
    }
    let count = binomial(n as u64, m as u64).unwrap_or(u128::MAX);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded { n, m, budget });
    }
    Ok(count as u64)
}

/// Calls `visit` on each arrangement whose first one sits at `lead`
/// (`lead = n` stands for the all-zero arrangement).
fn for_each_with_lead(n: usize, m: usize, lead: usize, mut visit: impl FnMut(&[u8])) {
    let mut bits = vec![0u8; n];
    if m == 0 {
        if lead == n {
            visit(&bits);
        }
        return;
    }
    if lead >= n || n - lead < m {
        return;
    }
    bits[lead] = 1;
    let rest = m - 1;
    // positions of the remaining ones, strictly increasing after `lead`
    let mut pos: Vec<usize> = (lead + 1..lead + 1 + rest).collect();
    loop {
        for &p in &pos {
            bits[p] = 1;
        }
        visit(&bits);
        for &p in &pos {
            bits[p] = 0;
        }
        let mut i = rest;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if pos[i] < n - (rest - i) {
                pos[i] += 1;
                for j in i + 1..rest {
                    pos[j] = pos[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Tallies `key(arrangement)` over all arrangements, in parallel over the
/// position of the first one.
fn tally<K, F>(n: usize, m: usize, budget: u64, key: F) -> Result<(BTreeMap<K, u64>, u64)>
where
    K: Ord + Send,
    F: Fn(&[u8]) -> K + Sync,
{
    let total = arrangements_count(n, m, budget)?;
    let leads: Vec<usize> = if m == 0 { vec![n] } else { (0..n).collect() };
    let counts = leads
        .into_par_iter()
        .map(|lead| {
            let mut local = BTreeMap::new();
            for_each_with_lead(n, m, lead, |bits| *local.entry(key(bits)).or_insert(0u64) += 1);
            local
        })
        .reduce(BTreeMap::new, |mut acc, part| {
            for (k, c) in part {
                *acc.entry(k).or_insert(0) += c;
            }
            acc
        });
    let seen: u64 = counts.values().sum();
    if seen != total {
        return Err(Error::Invariant(format!(
            "enumerated {seen} arrangements, expected {total}"
        )));
    }
    Ok((counts, total))
}

fn ratio(count: u64, total: u64) -> BigRational {
    BigRational::new(BigInt::from(count), BigInt::from(total))
}

fn check_family(family: StatFamily) -> Result<()> {
    family.validate()
}

/// `P(stat_n < threshold | N_n = m)`.
pub fn enumerate_conditional(
    n: usize,
    m: usize,
    family: StatFamily,
    threshold: usize,
    budget: u64,
) -> Result<BigRational> {
    check_family(family)?;
    let (counts, total) = tally(n, m, budget, |bits| statistic(bits, family) < threshold)?;
    Ok(ratio(counts.get(&true).copied().unwrap_or(0), total))
}

/// `P(stat_n = k | N_n = m)` for every value with positive mass.
pub fn enumerate_pmf(
    n: usize,
    m: usize,
    family: StatFamily,
    budget: u64,
) -> Result<BTreeMap<usize, BigRational>> {
    check_family(family)?;
    let (counts, total) = tally(n, m, budget, |bits| statistic(bits, family))?;
    Ok(counts.into_iter().map(|(k, c)| (k, ratio(c, total))).collect())
}

/// `P(stat_n = a, stat_{n-1} = b | N_n = m)` for every pair with positive mass.
pub fn enumerate_joint_table(
    n: usize,
    m: usize,
    family: StatFamily,
    budget: u64,
) -> Result<BTreeMap<(usize, usize), BigRational>> {
    if n == 0 {
        return Err(invalid("joint distribution needs n >= 1"));
    }
    check_family(family)?;
    let (counts, total) = tally(n, m, budget, |bits| {
        (statistic(bits, family), statistic(&bits[..n - 1], family))
    })?;
    Ok(counts.into_iter().map(|(k, c)| (k, ratio(c, total))).collect())
}

/// `P(stat_n = a, stat_{n-1} = b | N_n = m)`.
pub fn enumerate_joint(
    n: usize,
    m: usize,
    family: StatFamily,
    a: usize,
    b: usize,
    budget: u64,
) -> Result<BigRational> {
    let table = enumerate_joint_table(n, m, family, budget)?;
    Ok(table.get(&(a, b)).cloned().unwrap_or_else(<BigRational as Field>::zero))
}

/// One compared instance of the verification grid.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyCell {
    pub family: StatFamily,
    pub threshold: usize,
    pub n: usize,
    pub m: usize,
    pub oracle: String,
    pub chain: String,
    pub table: String,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub max_n: usize,
    pub cells: Vec<VerifyCell>,
    pub mismatches: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Thresholds covered by the grid: longest run `d = 1..=6` and every scan
/// `(r, s)` with `1 <= s <= r <= 6`.
pub fn grid_families() -> Vec<(StatFamily, usize)> {
    let mut out: Vec<(StatFamily, usize)> = (1..=6).map(|d| (StatFamily::LongestRun, d)).collect();
    for r in 1..=6 {
        for s in 1..=r {
            out.push((StatFamily::Scan { window: r }, s));
        }
    }
    out
}

/// Compares the forward-propagation route and the count-lift table route
/// against enumeration for every `n <= max_n`, `0 <= m <= n`, in exact
/// arithmetic.
pub fn verify_grid(max_n: usize) -> Result<VerifyReport> {
    let cells: Vec<Result<Vec<VerifyCell>>> = grid_families()
        .into_par_iter()
        .map(|(family, threshold)| {
            let cp = family.compound(threshold)?;
            let mut table = SurvivalTable::<BigRational>::new(&cp, Retention::All);
            let mut out = Vec::new();
            for n in 0..=max_n {
                for m in 0..=n {
                    let oracle = enumerate_conditional(n, m, family, threshold, DEFAULT_BUDGET)?;
                    let chain: BigRational = crate::fmci::survival_probability(n, m, &cp)?;
                    let lifted = table.survival(n, m)?;
                    out.push(VerifyCell {
                        family,
                        threshold,
                        n,
                        m,
                        ok: oracle == chain && oracle == lifted,
                        oracle: oracle.to_string(),
                        chain: chain.to_string(),
                        table: lifted.to_string(),
                    });
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for c in cells {
        all.extend(c?);
    }
    let mismatches = all.iter().filter(|c| !c.ok).count();
    Ok(VerifyReport {
        max_n,
        cells: all,
        mismatches,
    })
}

/// One compared cell of the joint verification grid.
#[derive(Clone, Debug, Serialize)]
pub struct JointCell {
    pub n: usize,
    pub m: usize,
    pub a: usize,
    pub b: usize,
    pub oracle: String,
    pub engine: String,
    pub ok: bool,
}

/// Compares [`crate::fmci::joint_two_step`] with enumeration for the longest
/// run, `1 <= n <= max_n`, every `m`, and values `a, b <= max_run`.
pub fn verify_joint_grid(max_n: usize, max_run: usize) -> Result<Vec<JointCell>> {
    let family = StatFamily::LongestRun;
    let cells: Vec<Result<Vec<JointCell>>> = (1..=max_n)
        .into_par_iter()
        .map(|n| {
            let mut out = Vec::new();
            for m in 0..=n {
                let table = enumerate_joint_table(n, m, family, DEFAULT_BUDGET)?;
                for a in 0..=max_run.min(n) {
                    for b in 0..=max_run.min(n) {
                        let oracle = table
                            .get(&(a, b))
                            .cloned()
                            .unwrap_or_else(<BigRational as Field>::zero);
                        let engine: BigRational = crate::fmci::joint_two_step(n, m, family, a, b)?;
                        out.push(JointCell {
                            n,
                            m,
                            a,
                            b,
                            ok: oracle == engine,
                            oracle: oracle.to_string(),
                            engine: engine.to_string(),
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for c in cells {
        all.extend(c?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::rational;

    #[test]
    fn statistic_by_hand() {
        assert_eq!(statistic(&[1, 1, 0, 1, 1, 1, 0], StatFamily::LongestRun), 3);
        assert_eq!(statistic(&[1, 0, 1, 0, 0, 1], StatFamily::Scan { window: 3 }), 2);
        assert_eq!(statistic(&[1, 1], StatFamily::Scan { window: 5 }), 2);
        assert_eq!(statistic(&[], StatFamily::LongestRun), 0);
    }

    #[test]
    fn arrangements_are_complete_and_distinct() {
        let mut all = Vec::new();
        for lead in 0..=6 {
            for_each_with_lead(6, 3, lead, |b| all.push(b.to_vec()));
        }
        assert_eq!(all.len(), 20);
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 20);
        assert!(all.iter().all(|b| b.iter().filter(|&&x| x == 1).count() == 3));
    }

    #[test]
    fn worked_examples() {
        let lr = StatFamily::LongestRun;
        assert_eq!(enumerate_conditional(5, 3, lr, 3, DEFAULT_BUDGET).unwrap(), rational(7, 10));
        assert_eq!(enumerate_conditional(5, 5, lr, 3, DEFAULT_BUDGET).unwrap(), rational(0, 1));
        let scan = StatFamily::Scan { window: 3 };
        assert_eq!(enumerate_conditional(5, 2, scan, 2, DEFAULT_BUDGET).unwrap(), rational(3, 10));
    }

    #[test]
    fn joint_marginal_matches_pmf() {
        let lr = StatFamily::LongestRun;
        let joint = enumerate_joint_table(7, 4, lr, DEFAULT_BUDGET).unwrap();
        let pmf = enumerate_pmf(7, 4, lr, DEFAULT_BUDGET).unwrap();
        for (k, p) in &pmf {
            let marginal = joint
                .iter()
                .filter(|((a, _), _)| a == k)
                .fold(rational(0, 1), |acc, (_, q)| acc + q.clone());
            assert_eq!(&marginal, p);
        }
        assert!(joint.keys().all(|(a, b)| a >= b));
        assert_eq!(enumerate_joint(7, 4, lr, 1, 2, DEFAULT_BUDGET).unwrap(), rational(0, 1));
    }

    #[test]
    fn budget_is_enforced() {
        let err = enumerate_conditional(30, 15, StatFamily::LongestRun, 3, DEFAULT_BUDGET);
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
        assert!(enumerate_conditional(20, 3, StatFamily::LongestRun, 3, DEFAULT_BUDGET).is_ok());
    }
}
