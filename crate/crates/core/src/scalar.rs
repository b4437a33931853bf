//! Scalar abstraction so the cost model and the simulator can run over
//! floating-point numbers (fast, for sweeps) or exact rationals (for tests
//! that pin down cost arithmetic to the last digit).

use std::fmt::{Debug, Display};

use num_rational::Rational64;
use num_traits::{Num, NumAssign, Signed, ToPrimitive};
use rand::Rng;

/// Numeric type the simulator computes with.
///
/// Implementations: `f32`, `f64`, and `Rational64`. Event times, link
/// properties, and every cost value are expressed in this type, so an
/// entire run is exact when instantiated with rationals.
pub trait Scalar:
    Num + NumAssign + Signed + PartialOrd + Clone + Debug + Display + Send + Sync + 'static
{
    fn from_int(n: i64) -> Self;

    /// `num / den`, exact for rationals and rounded once for floats.
    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    /// Smallest integer `>= self`. Callers guarantee the value is in a
    /// small range (ratings), so `i64` never overflows.
    fn ceil_int(&self) -> i64;

    /// Lossy view for reporting; exactness-sensitive code must not use it.
    fn to_f64_lossy(&self) -> f64;

    /// Uniform draw from the half-open interval `(0, max]`.
    fn sample_open_closed<R: Rng + ?Sized>(max: &Self, rng: &mut R) -> Self;

    /// Text form that `parse_text` round-trips exactly.
    fn format_lossless(&self) -> String;

    /// Parses a decimal literal (e.g. `"17.05"`); rationals also accept
    /// `"num/den"`. Returns `None` on malformed input.
    fn parse_text(s: &str) -> Option<Self>;
}

impl Scalar for f64 {
    fn from_int(n: i64) -> Self {
        n as f64
    }

    fn ceil_int(&self) -> i64 {
        self.ceil() as i64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }

    fn sample_open_closed<R: Rng + ?Sized>(max: &Self, rng: &mut R) -> Self {
        // random::<f64>() is in [0, 1), so 1 - u is in (0, 1].
        max * (1.0 - rng.random::<f64>())
    }

    fn format_lossless(&self) -> String {
        // Debug prints the shortest string that parses back to the same bits.
        format!("{self:?}")
    }

    fn parse_text(s: &str) -> Option<Self> {
        let v: f64 = s.trim().parse().ok()?;
        v.is_finite().then_some(v)
    }
}

impl Scalar for f32 {
    fn from_int(n: i64) -> Self {
        n as f32
    }

    fn ceil_int(&self) -> i64 {
        self.ceil() as i64
    }

    fn to_f64_lossy(&self) -> f64 {
        f64::from(*self)
    }

    fn sample_open_closed<R: Rng + ?Sized>(max: &Self, rng: &mut R) -> Self {
        max * (1.0 - rng.random::<f32>())
    }

    fn format_lossless(&self) -> String {
        format!("{self:?}")
    }

    fn parse_text(s: &str) -> Option<Self> {
        let v: f32 = s.trim().parse().ok()?;
        v.is_finite().then_some(v)
    }
}

/// Lattice resolution for rational sampling: draws land on multiples of
/// `max / 10^6`, keeping denominators small enough to avoid overflow in
/// accumulated sums.
const RATIONAL_SAMPLE_STEPS: i64 = 1_000_000;

impl Scalar for Rational64 {
    fn from_int(n: i64) -> Self {
        Rational64::from_integer(n)
    }

    fn ceil_int(&self) -> i64 {
        self.ceil().to_integer()
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn sample_open_closed<R: Rng + ?Sized>(max: &Self, rng: &mut R) -> Self {
        let k = rng.random_range(1..=RATIONAL_SAMPLE_STEPS);
        max * Rational64::new(k, RATIONAL_SAMPLE_STEPS)
    }

    fn format_lossless(&self) -> String {
        if self.is_integer() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn parse_text(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            if d == 0 {
                return None;
            }
            return Some(Rational64::new(n, d));
        }
        let (num, den) = parse_decimal(s)?;
        Some(Rational64::new(num, den))
    }
}

/// Parses an optionally signed decimal literal into an exact `(num, den)`
/// pair, e.g. `"17.05"` -> `(1705, 100)`. Returns `None` on overflow or
/// malformed input.
fn parse_decimal(s: &str) -> Option<(i64, i64)> {
    let (sign, digits) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1i64, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let mut num: i64 = 0;
    let mut den: i64 = 1;
    for c in int_part.chars().chain(frac_part.chars()) {
        num = num.checked_mul(10)?.checked_add((c as u8 - b'0') as i64)?;
    }
    for _ in 0..frac_part.len() {
        den = den.checked_mul(10)?;
    }
    Some((sign * num, den))
}
