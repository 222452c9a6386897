//! Simulation time as integer nanoseconds.
//!
//! All clocks in the simulator are [`Instant`]s measured from the run origin,
//! and all intervals are [`Span`]s. Real-valued draws are converted with
//! round-half-up so that identical seeds give identical traces everywhere.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

const NANOS_PER_SEC: f64 = 1e9;

/// A non-negative duration in nanoseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Span(pub u64);

/// A point on the simulation clock, in nanoseconds since the run origin.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Instant(pub u64);

impl Span {
    pub const ZERO: Span = Span(0);
    pub const MAX: Span = Span(u64::MAX);

    pub const fn from_nanos(n: u64) -> Self {
        Span(n)
    }

    pub const fn from_micros(us: u64) -> Self {
        Span(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Span(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Span(s * 1_000_000_000)
    }

    /// Converts real seconds to nanoseconds, rounding half-up.
    ///
    /// Negative and NaN inputs clamp to zero; values beyond the `u64` range
    /// saturate.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return Span::ZERO;
        }
        let ns = (secs * NANOS_PER_SEC + 0.5).floor();
        if ns >= u64::MAX as f64 {
            Span::MAX
        } else {
            Span(ns as u64)
        }
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_add(self, other: Span) -> Span {
        Span(self.0.saturating_add(other.0))
    }

    pub fn saturating_sub(self, other: Span) -> Span {
        Span(self.0.saturating_sub(other.0))
    }

    pub fn checked_mul(self, k: u64) -> Option<Span> {
        self.0.checked_mul(k).map(Span)
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl Instant {
    pub const ORIGIN: Instant = Instant(0);
    pub const NEVER: Instant = Instant(u64::MAX);

    pub const fn from_nanos(n: u64) -> Self {
        Instant(n)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Instant(Span::from_secs_f64(secs).0)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC
    }

    /// Span since the origin.
    pub const fn since_origin(self) -> Span {
        Span(self.0)
    }

    /// `self - earlier`, or zero if `earlier` is later.
    pub fn saturating_since(self, earlier: Instant) -> Span {
        Span(self.0.saturating_sub(earlier.0))
    }

    pub fn saturating_add(self, span: Span) -> Instant {
        Instant(self.0.saturating_add(span.0))
    }
}

impl Add for Span {
    type Output = Span;
    fn add(self, rhs: Span) -> Span {
        Span(self.0 + rhs.0)
    }
}

impl AddAssign for Span {
    fn add_assign(&mut self, rhs: Span) {
        self.0 += rhs.0;
    }
}

impl Sub for Span {
    type Output = Span;
    fn sub(self, rhs: Span) -> Span {
        Span(self.0 - rhs.0)
    }
}

impl std::iter::Sum for Span {
    fn sum<I: Iterator<Item = Span>>(iter: I) -> Span {
        iter.fold(Span::ZERO, |a, b| a + b)
    }
}

impl Add<Span> for Instant {
    type Output = Instant;
    fn add(self, rhs: Span) -> Instant {
        Instant(self.0 + rhs.0)
    }
}

impl AddAssign<Span> for Instant {
    fn add_assign(&mut self, rhs: Span) {
        self.0 += rhs.0;
    }
}

impl Sub for Instant {
    type Output = Span;
    fn sub(self, rhs: Instant) -> Span {
        Span(self.0 - rhs.0)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}ns", self.0)
    }
}
