//! Exact algebra for right-continuous step functions on the extended reals.
//!
//! Every admissibility profile `λ ↦ A(λ)` produced by a threshold-indexed
//! selection rule is piecewise constant: the selected output can only change
//! when `λ` crosses one of finitely many breakpoints derived from the scores.
//! This module is the computational substrate shared by all calibration: a
//! step function is a strictly increasing breakpoint list, one value per
//! half-open segment `(−∞, b₁), [b₁, b₂), …, [b_k, ∞)`, plus a separately
//! stored value at the isolated point `λ = +∞` (the abstention point, which
//! need not agree with the last finite segment).
//!
//! All queries are exact — no tolerances, no interpolation. The value *at* a
//! breakpoint is the value of the segment that starts there
//! (right-continuity), matching the convention that an output selected at
//! threshold `λ` stays selected for every larger threshold.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::{count_to_real, Error, Real, Result};

/// A selection threshold on the extended real line `[−∞, +∞]`.
///
/// The infinities are explicit variants rather than IEEE sentinel floats so
/// that breakpoint sorting and exact comparisons stay unambiguous, and so
/// that `+∞` can serve as the always-available abstention member of the
/// threshold domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold<T> {
    /// Below every finite threshold (least conservative endpoint).
    NegInf,
    /// A finite threshold value.
    Finite(T),
    /// Above every finite threshold: the abstention endpoint, always a
    /// member of the threshold domain.
    PosInf,
}

impl<T: Real> Threshold<T> {
    /// Returns the finite value, if any.
    #[must_use]
    pub fn finite(self) -> Option<T> {
        match self {
            Threshold::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// True for the `Finite` variant.
    #[must_use]
    pub fn is_finite(self) -> bool {
        matches!(self, Threshold::Finite(_))
    }
}

impl<T: Real> PartialOrd for Threshold<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        use Threshold::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Some(Ordering::Equal),
            (NegInf, _) | (_, PosInf) => Some(Ordering::Less),
            (_, NegInf) | (PosInf, _) => Some(Ordering::Greater),
            (Finite(a), Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl<T: Real> fmt::Display for Threshold<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::NegInf => f.write_str("-inf"),
            Threshold::Finite(x) => write!(f, "{x}"),
            Threshold::PosInf => f.write_str("inf"),
        }
    }
}

impl<T: Real> FromStr for Threshold<T> {
    type Err = Error;

    /// Parses `"-inf"`, `"inf"` (also `"+inf"`), or a finite number.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "-inf" => Ok(Threshold::NegInf),
            "inf" | "+inf" => Ok(Threshold::PosInf),
            other => {
                let x: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidData(format!("cannot parse threshold {other:?}")))?;
                if !x.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "threshold {other:?} is not finite; use the literals \"inf\"/\"-inf\""
                    )));
                }
                let x = T::from(x).ok_or_else(|| {
                    Error::InvalidData(format!("threshold {other:?} not representable"))
                })?;
                Ok(Threshold::Finite(x))
            }
        }
    }
}

impl<T: Real> Serialize for Threshold<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Threshold::NegInf => serializer.serialize_str("-inf"),
            Threshold::PosInf => serializer.serialize_str("inf"),
            Threshold::Finite(x) => serializer.serialize_f64(
                x.to_f64().expect("finite scalar converts to f64"),
            ),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for Threshold<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ThresholdVisitor<T>(std::marker::PhantomData<T>);

        impl<T: Real> Visitor<'_> for ThresholdVisitor<T> {
            type Value = Threshold<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or the string \"inf\"/\"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                if !v.is_finite() {
                    return Err(E::custom("numeric thresholds must be finite"));
                }
                T::from(v)
                    .map(Threshold::Finite)
                    .ok_or_else(|| E::custom("threshold not representable"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                self.visit_f64(v as f64)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ThresholdVisitor(std::marker::PhantomData))
    }
}

/// A right-continuous, piecewise-constant function on the extended reals
/// with non-negative values.
///
/// With breakpoints `b₁ < … < b_k`, `segment_values[0]` is the value on
/// `(−∞, b₁)` and `segment_values[j]` the value on `[b_j, b_{j+1})`
/// (`[b_k, ∞)` for the last). The value at the isolated point `λ = +∞` is
/// stored separately: abstention admissibility is a distinguished quantity
/// and need not equal the last finite segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction<T> {
    breakpoints: Vec<T>,
    segment_values: Vec<T>,
    value_at_pos_inf: T,
}

impl<T: Real> StepFunction<T> {
    /// Builds a step function, validating the structural invariants:
    /// strictly increasing finite breakpoints, `len(values) == len(breakpoints) + 1`,
    /// and non-negative finite values throughout.
    pub fn new(breakpoints: Vec<T>, segment_values: Vec<T>, value_at_pos_inf: T) -> Result<Self> {
        if segment_values.len() != breakpoints.len() + 1 {
            return Err(Error::LengthMismatch {
                field: "segment values",
                expected: breakpoints.len() + 1,
                found: segment_values.len(),
            });
        }
        for (i, b) in breakpoints.iter().enumerate() {
            if !b.is_finite() {
                return Err(Error::NonFinite {
                    field: "breakpoint",
                    position: i + 1,
                });
            }
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        for (i, v) in segment_values
            .iter()
            .chain(std::iter::once(&value_at_pos_inf))
            .enumerate()
        {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "segment value",
                    position: i + 1,
                });
            }
            if *v < T::zero() {
                return Err(Error::InvalidData(
                    "segment values must be non-negative".into(),
                ));
            }
        }
        Ok(Self {
            breakpoints,
            segment_values,
            value_at_pos_inf,
        })
    }

    /// A function constant everywhere, including at `+∞`.
    pub fn constant(value: T) -> Result<Self> {
        Self::new(Vec::new(), vec![value], value)
    }

    /// The strictly increasing breakpoint list.
    #[must_use]
    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    /// One value per segment; `len() == breakpoints().len() + 1`.
    #[must_use]
    pub fn segment_values(&self) -> &[T] {
        &self.segment_values
    }

    /// The value at the isolated point `λ = +∞`.
    #[must_use]
    pub fn value_at_pos_inf(&self) -> T {
        self.value_at_pos_inf
    }

    /// Evaluates the function under the right-continuous convention: at a
    /// breakpoint the value of the segment *starting* there is returned.
    #[must_use]
    pub fn eval(&self, at: Threshold<T>) -> T {
        match at {
            Threshold::NegInf => self.segment_values[0],
            Threshold::PosInf => self.value_at_pos_inf,
            Threshold::Finite(x) => {
                let idx = self.breakpoints.partition_point(|b| *b <= x);
                self.segment_values[idx]
            }
        }
    }

    /// Pointwise arithmetic mean of several step functions.
    ///
    /// Breakpoints are the sorted union of the inputs'; each merged-segment
    /// value is the sum of the inputs' values on that segment, in input
    /// order, divided by the count. The summation order is fixed so that
    /// independent recomputations of the same mean agree bitwise.
    pub fn mean(fns: &[Self]) -> Result<Self> {
        if fns.is_empty() {
            return Err(Error::EmptyInput("calibration set"));
        }
        let n: T = count_to_real(fns.len());

        let mut merged: Vec<T> = fns.iter().flat_map(|f| f.breakpoints.iter().copied()).collect();
        merged.sort_by(|a, b| a.partial_cmp(b).expect("breakpoints are never NaN"));
        merged.dedup();

        // One cursor per input tracks which of its segments covers the
        // current merged segment; the sweep is O(total breakpoints) amortized.
        let mut cursors = vec![0usize; fns.len()];
        let mut values = Vec::with_capacity(merged.len() + 1);

        let first: T = fns
            .iter()
            .fold(T::zero(), |acc, f| acc + f.segment_values[0]);
        values.push(first / n);

        for &b in &merged {
            let mut sum = T::zero();
            for (f, cursor) in fns.iter().zip(cursors.iter_mut()) {
                while *cursor < f.breakpoints.len() && f.breakpoints[*cursor] <= b {
                    *cursor += 1;
                }
                sum = sum + f.segment_values[*cursor];
            }
            values.push(sum / n);
        }

        let at_inf = fns
            .iter()
            .fold(T::zero(), |acc, f| acc + f.value_at_pos_inf)
            / n;

        Self::new(merged, values, at_inf)
    }

    /// Smallest `λ` in the extended domain with `f(λ) ≥ level`.
    ///
    /// Returns `NegInf` when the first segment already qualifies and
    /// `PosInf` when no finite segment does — `+∞` is always a member of the
    /// threshold domain, so the result is total. Whenever the result is not
    /// `PosInf`, attainment holds by construction: `eval(result) ≥ level`.
    #[must_use]
    pub fn inf_at_least(&self, level: T) -> Threshold<T> {
        if self.segment_values[0] >= level {
            return Threshold::NegInf;
        }
        for (j, v) in self.segment_values.iter().enumerate().skip(1) {
            if *v >= level {
                return Threshold::Finite(self.breakpoints[j - 1]);
            }
        }
        Threshold::PosInf
    }

    /// Supremum of the function over all `λ` strictly below `at`.
    ///
    /// For `at = NegInf` the domain below is empty and the convention value
    /// `0` is returned (the jump at the domain minimum is the full value
    /// there). For `at = PosInf` the supremum ranges over all finite
    /// segments, excluding the isolated `+∞` point.
    #[must_use]
    pub fn sup_strictly_below(&self, at: Threshold<T>) -> T {
        let max_of = |vals: &[T]| {
            vals.iter()
                .copied()
                .fold(T::zero(), |a, v| if v > a { v } else { a })
        };
        match at {
            Threshold::NegInf => T::zero(),
            Threshold::PosInf => max_of(&self.segment_values),
            Threshold::Finite(x) => {
                let cnt = self.breakpoints.partition_point(|b| *b < x);
                max_of(&self.segment_values[..=cnt])
            }
        }
    }

    /// True when the finite segments are non-decreasing and the abstention
    /// value is at least the last finite segment — the profile shape the
    /// guarantee theory prefers.
    #[must_use]
    pub fn is_non_decreasing(&self) -> bool {
        self.segment_values.windows(2).all(|w| w[0] <= w[1])
            && self.value_at_pos_inf
                >= *self
                    .segment_values
                    .last()
                    .expect("segment values are never empty")
    }

    /// Largest value attained on any finite segment.
    #[must_use]
    pub fn max_finite_value(&self) -> T {
        self.segment_values
            .iter()
            .copied()
            .fold(T::zero(), |a, v| if v > a { v } else { a })
    }
}
