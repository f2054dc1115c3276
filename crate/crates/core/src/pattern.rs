//! Compound patterns for scan and longest-run events, and the ending-block
//! automaton that tracks the longest suffix still able to grow into a pattern.
//!
//! `{S_n(r) < s}` is the event that no pattern of length at most `r` that
//! starts and ends with `1` and holds exactly `s` ones has occurred.
//! `{L_n < d}` is the event that `1^d` has not occurred.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{invalid, Result};

/// A finite binary string.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimplePattern(Vec<u8>);

impl SimplePattern {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("a simple pattern must be non-empty"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("pattern symbols must be 0 or 1"));
        }
        Ok(SimplePattern(bits))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bits = text
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(invalid(format!("unexpected symbol {other:?} in pattern"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl fmt::Display for SimplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for SimplePattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// What event a compound pattern encodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatternKind {
    /// `{S_n(window) < count}` fails once any pattern occurs.
    Scan { window: usize, count: usize },
    /// `{L_n < run}` fails once `1^run` occurs.
    LongestRun { run: usize },
}

/// The set of simple patterns whose joint non-occurrence is the event of
/// interest. Patterns are kept sorted by length, then by value.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompoundPattern {
    kind: PatternKind,
    patterns: Vec<SimplePattern>,
}

impl CompoundPattern {
    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    pub fn patterns(&self) -> &[SimplePattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

fn sorted(mut patterns: Vec<SimplePattern>) -> Vec<SimplePattern> {
    patterns.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.bits().cmp(b.bits())));
    patterns.dedup();
    patterns
}

/// All patterns of length at most `window` that begin and end with `1` and
/// contain exactly `count` ones.
pub fn generate_scan_compound(window: usize, count: usize) -> Result<CompoundPattern> {
    if window == 0 || count == 0 || count > window {
        return Err(invalid(format!(
            "scan pattern needs 1 <= s <= r, got r = {window}, s = {count}"
        )));
    }
    let kind = PatternKind::Scan { window, count };
    if count == 1 {
        return Ok(CompoundPattern {
            kind,
            patterns: vec![SimplePattern(vec![1])],
        });
    }

    // Interior of length len - 2 carrying count - 2 ones.
    fn fill(interior: usize, ones: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if interior == 0 {
            if ones == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if interior > ones {
            prefix.push(0);
            fill(interior - 1, ones, prefix, out);
            prefix.pop();
        }
        if ones > 0 {
            prefix.push(1);
            fill(interior - 1, ones - 1, prefix, out);
            prefix.pop();
        }
    }

    let mut patterns = Vec::new();
    for len in count..=window {
        let mut interiors = Vec::new();
        fill(len - 2, count - 2, &mut Vec::with_capacity(len), &mut interiors);
        for interior in interiors {
            let mut bits = Vec::with_capacity(len);
            bits.push(1);
            bits.extend(interior);
            bits.push(1);
            patterns.push(SimplePattern(bits));
        }
    }
    Ok(CompoundPattern {
        kind,
        patterns: sorted(patterns),
    })
}

pub(crate) fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Number of simple patterns for `{S_n(r) < s}`:
/// `sum_{v=0}^{r-s} C(s-2+v, v)`.
///
/// The binomial form needs `s >= 2`; for `s = 1` the only pattern is `1` and
/// the count is 1 (which is also what the formula gives with `C(-1, 0) = 1`).
pub fn count_simple_patterns(window: usize, count: usize) -> Result<u128> {
    if window == 0 || count == 0 || count > window {
        return Err(invalid(format!(
            "pattern count needs 1 <= s <= r, got r = {window}, s = {count}"
        )));
    }
    if count == 1 {
        return Ok(1);
    }
    let mut total: u128 = 0;
    for v in 0..=(window - count) {
        let term = binomial((count - 2 + v) as u64, v as u64)
            .ok_or_else(|| invalid("pattern count overflows u128"))?;
        total = total
            .checked_add(term)
            .ok_or_else(|| invalid("pattern count overflows u128"))?;
    }
    Ok(total)
}

/// The single run `1^d`.
pub fn longest_run_pattern(run: usize) -> Result<CompoundPattern> {
    if run == 0 {
        return Err(invalid("run length d must be at least 1"));
    }
    Ok(CompoundPattern {
        kind: PatternKind::LongestRun { run },
        patterns: vec![SimplePattern(vec![1; run])],
    })
}

/// Outcome of feeding one symbol to the automaton.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transition {
    To(usize),
    Absorb,
}

/// Ending blocks of a compound pattern (its proper prefixes reachable from
/// the empty block) with the longest-suffix transition `<block, bit>`.
///
/// Block 0 is always the empty block, which doubles as the initial state.
#[derive(Clone, Debug)]
pub struct EndingBlockSpace {
    blocks: Vec<Vec<u8>>,
    ones: Vec<usize>,
    next: Vec<[Transition; 2]>,
}

impl EndingBlockSpace {
    pub const EMPTY: usize = 0;

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, index: usize) -> &[u8] {
        &self.blocks[index]
    }

    /// Number of ones in block `index`.
    pub fn ones(&self, index: usize) -> usize {
        self.ones[index]
    }

    pub fn index_of(&self, bits: &[u8]) -> Option<usize> {
        self.blocks.iter().position(|b| b.as_slice() == bits)
    }

    #[inline]
    pub fn transition(&self, block: usize, bit: u8) -> Transition {
        self.next[block][bit as usize]
    }

    /// Runs `bits` from the empty block; returns the 1-based position at which
    /// the automaton absorbs, if it does.
    pub fn first_occurrence(&self, bits: &[u8]) -> Option<usize> {
        let mut state = Self::EMPTY;
        for (i, &bit) in bits.iter().enumerate() {
            match self.transition(state, bit) {
                Transition::Absorb => return Some(i + 1),
                Transition::To(next) => state = next,
            }
        }
        None
    }
}

fn block_label(bits: &[u8]) -> String {
    if bits.is_empty() {
        "∅".to_string()
    } else {
        bits.iter().map(|b| char::from(b'0' + b)).collect()
    }
}

impl fmt::Display for EndingBlockSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels: Vec<String> = self.blocks.iter().map(|b| block_label(b)).collect();
        write!(f, "{{{}}}", labels.join(", "))
    }
}

/// Builds the ending-block automaton of `cp`.
///
/// Only blocks reachable from the empty block are kept.
pub fn build_ending_blocks(cp: &CompoundPattern) -> EndingBlockSpace {
    let patterns: Vec<&[u8]> = cp.patterns.iter().map(|p| p.bits()).collect();
    let mut prefixes: HashSet<Vec<u8>> = HashSet::new();
    for p in &patterns {
        for len in 0..p.len() {
            prefixes.insert(p[..len].to_vec());
        }
    }

    let advance = |block: &[u8], bit: u8| -> std::result::Result<Vec<u8>, ()> {
        let mut word = Vec::with_capacity(block.len() + 1);
        word.extend_from_slice(block);
        word.push(bit);
        if patterns.iter().any(|p| word.ends_with(p)) {
            return Err(());
        }
        for start in 0..=word.len() {
            if prefixes.contains(&word[start..]) {
                return Ok(word[start..].to_vec());
            }
        }
        unreachable!("the empty prefix is always present")
    };

    let mut blocks: Vec<Vec<u8>> = vec![Vec::new()];
    let mut index: HashMap<Vec<u8>, usize> = HashMap::from([(Vec::new(), 0)]);
    let mut next: Vec<[Transition; 2]> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let mut row = [Transition::Absorb; 2];
        for bit in 0..2u8 {
            if let Ok(target) = advance(&blocks[i].clone(), bit) {
                let j = match index.get(&target) {
                    Some(&j) => j,
                    None => {
                        let j = blocks.len();
                        blocks.push(target.clone());
                        index.insert(target, j);
                        queue.push_back(j);
                        j
                    }
                };
                row[bit as usize] = Transition::To(j);
            }
        }
        if next.len() <= i {
            next.resize(i + 1, [Transition::Absorb; 2]);
        }
        next[i] = row;
    }
    next.resize(blocks.len(), [Transition::Absorb; 2]);

    let ones = blocks
        .iter()
        .map(|b| b.iter().filter(|&&x| x == 1).count())
        .collect();
    EndingBlockSpace { blocks, ones, next }
}
