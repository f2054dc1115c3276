//! Distribution-free runs-based control charts.
//!
//! Observations are binarized against a cutoff `c`; given the number of ones
//! `N_n = m` seen so far, every arrangement of those ones is equally likely
//! under any in-control distribution. The scan statistic `S_n(r)` and the
//! longest run `L_n` therefore have exact conditional distributions that do
//! not depend on the process distribution. Those distributions are computed
//! here by finite Markov chain imbedding over an ending-block automaton and
//! are used to set data-dependent control limits with randomized tests.
//!
//! Layout:
//!
//! * [`pattern`]: compound patterns for scan and longest-run events and the
//!   ending-block automaton.
//! * [`fmci`]: forward propagation over the imbedded chain, conditional
//!   survival probabilities, pmfs, two-step joints, and the shared survival
//!   cache used by the charts.
//! * [`charting`]: binarization, limit solving, randomized tests and the online
//!   monitor (scan rule R-1 and longest-run rule R-2).
//! * [`oracle`]: brute-force enumeration over all arrangements, used as the
//!   independent ground truth.
//! * [`simulation`]: Monte Carlo ARL estimation under the change-point model.

#![forbid(unsafe_code)]

pub mod charting;
pub mod error;
pub mod fmci;
pub mod oracle;
pub mod pattern;
pub mod prob;
pub mod simulation;

pub use charting::{
    binarize, run_length, run_length_bits, ChartConfig, ChartEngine, ChartState, LevelStatus,
    LimitSolution, Rule, RunLengthRecord, SignalKind, StepRecord, Update,
};
pub use error::{Error, Result};
pub use fmci::{
    joint_two_step, lift_to_next_count, statistic_pmf, survival_probability, ForwardVector,
    ImbeddedChain, ImbeddedState, Retention, StatFamily, SurvivalCache, SurvivalTable,
};
pub use pattern::{
    build_ending_blocks, count_simple_patterns, generate_scan_compound, longest_run_pattern,
    CompoundPattern, EndingBlockSpace, PatternKind, SimplePattern, Transition,
};
pub use prob::{Arithmetic, Field, Prob};
