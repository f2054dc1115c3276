//! Probability values in exact rational or double-precision arithmetic.
//!
//! The imbedded-chain code is generic over [`Field`] so the same propagation
//! runs on `f64` and on [`BigRational`]. The charting layer works with
//! [`Prob`], which carries either representation and falls back to `f64` as
//! soon as an operand is inexact.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, Result};

/// Arithmetic needed by the forward propagation.
pub trait Field:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    /// `num / den`; `den` must be non-zero.
    fn ratio(num: u64, den: u64) -> Self;
    fn is_zero(&self) -> bool;
    fn to_f64(&self) -> f64;
    fn into_prob(self) -> Prob;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn into_prob(self) -> Prob {
        Prob::Float(self)
    }
}

impl Field for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn into_prob(self) -> Prob {
        Prob::Exact(self)
    }
}

/// `num / den` as an exact rational.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Which arithmetic the probability layer uses for a sequence of length `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    Exact,
    Float,
    /// Exact up to and including `exact_max_n`, double precision beyond.
    Auto { exact_max_n: usize },
}

impl Default for Arithmetic {
    fn default() -> Self {
        Arithmetic::Auto { exact_max_n: 64 }
    }
}

impl Arithmetic {
    pub fn exact_at(&self, n: usize) -> bool {
        match *self {
            Arithmetic::Exact => true,
            Arithmetic::Float => false,
            Arithmetic::Auto { exact_max_n } => n <= exact_max_n,
        }
    }
}

/// A probability, exact when every input that produced it was exact.
#[derive(Clone, Debug)]
pub enum Prob {
    Exact(BigRational),
    Float(f64),
}

impl Prob {
    pub fn zero(exact: bool) -> Self {
        if exact {
            Prob::Exact(Zero::zero())
        } else {
            Prob::Float(0.0)
        }
    }

    pub fn one(exact: bool) -> Self {
        if exact {
            Prob::Exact(One::one())
        } else {
            Prob::Float(1.0)
        }
    }

    /// Exact rational for the shortest decimal spelling of `x` (so `0.1` is
    /// `1/10`, not the binary expansion of the double).
    pub fn decimal(x: f64) -> Result<BigRational> {
        if !x.is_finite() {
            return Err(invalid(format!("{x} has no decimal expansion")));
        }
        let text = format!("{x}");
        let (negative, digits) = match text.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, text.as_str()),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        let mantissa: BigInt = format!("{int_part}{frac_part}")
            .parse()
            .map_err(|_| invalid(format!("cannot parse {x} as a decimal")))?;
        let scale = num_traits::pow(BigInt::from(10u32), frac_part.len());
        let value = BigRational::new(mantissa, scale);
        Ok(if negative { -value } else { value })
    }

    /// `x` as an exact decimal when `exact`, otherwise as a double.
    pub fn from_f64(x: f64, exact: bool) -> Result<Self> {
        if exact {
            Ok(Prob::Exact(Self::decimal(x)?))
        } else {
            Ok(Prob::Float(x))
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Prob::Exact(_))
    }

    pub fn exact(&self) -> Option<&BigRational> {
        match self {
            Prob::Exact(r) => Some(r),
            Prob::Float(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Prob::Exact(r) => Field::to_f64(r),
            Prob::Float(x) => *x,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Prob::Exact(r) => Zero::is_zero(r),
            Prob::Float(x) => *x == 0.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Prob::Exact(r) => r.is_negative(),
            Prob::Float(x) => *x < 0.0,
        }
    }

    /// `"p/q"` for exact values.
    pub fn exact_string(&self) -> Option<String> {
        self.exact().map(|r| r.to_string())
    }

    pub fn min(self, other: Prob) -> Prob {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Prob) -> Prob {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl fmt::Display for Prob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prob::Exact(r) => write!(f, "{r}"),
            Prob::Float(x) => write!(f, "{x}"),
        }
    }
}

impl Serialize for Prob {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.to_f64())
    }
}

impl PartialEq for Prob {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => a == b,
            _ => self.to_f64() == other.to_f64(),
        }
    }
}

impl PartialOrd for Prob {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Prob::Exact(a), Prob::Exact(b)) => a.partial_cmp(b),
            _ => self.to_f64().partial_cmp(&other.to_f64()),
        }
    }
}

macro_rules! prob_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for Prob {
            type Output = Prob;
            fn $method(self, rhs: Prob) -> Prob {
                match (self, rhs) {
                    (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a $op b),
                    (a, b) => Prob::Float(a.to_f64() $op b.to_f64()),
                }
            }
        }

        impl<'a> $trait<&'a Prob> for &'a Prob {
            type Output = Prob;
            fn $method(self, rhs: &'a Prob) -> Prob {
                match (self, rhs) {
                    (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a $op b),
                    (a, b) => Prob::Float(a.to_f64() $op b.to_f64()),
                }
            }
        }
    };
}

prob_binop!(Add, add, +);
prob_binop!(Sub, sub, -);
prob_binop!(Mul, mul, *);
prob_binop!(Div, div, /);
