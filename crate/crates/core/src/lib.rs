//! Calibrated selection of generated outputs with a distribution-free
//! admissibility guarantee.
//!
//! Given a calibration set of scored generation sequences, each element
//! annotated with an instance-level admissibility value, this crate computes
//! the smallest selection threshold `λ̂` such that the expected admissibility
//! of the selected output on an exchangeable test point is at least a user
//! target `γ`. The machinery is exact: per-record admissibility profiles
//! `λ ↦ A(λ)` are right-continuous step functions with finitely many
//! breakpoints, so calibration reduces to a scan over the merged breakpoint
//! set — no grids, no tolerances.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`stepfn`] — exact step-function algebra on the extended real line;
//! - [`selection`] — the catalog of threshold-indexed selection rules and
//!   their breakpoint enumeration;
//! - [`admissibility`] — aggregation of per-element admissibilities into a
//!   sequence-level value, and per-record profile construction;
//! - [`calibrate`] — the threshold search, its split-conformal and
//!   risk-control special cases, and upper-bound diagnostics;
//! - [`infer`] — applying a calibrated threshold, including streaming
//!   selection that stops pulling elements as soon as the decision is made;
//! - [`eval`] — sweep/simulation harnesses that verify the guarantee
//!   empirically, plus a weighted-ensemble subset-selection demo.
//!
//! All numeric types are generic over the scalar via [`Real`] (implemented
//! for `f32` and `f64`); concrete `f64` aliases for the core currency types
//! are exported at the crate root.

#![deny(unsafe_code)]
#![warn(missing_docs)]

use std::fmt;

pub mod admissibility;
pub mod calibrate;
pub mod eval;
pub mod infer;
pub mod selection;
pub mod stepfn;

pub use admissibility::{AdmissibilitySpec, Aggregator, InstanceAdmissibilities};
pub use calibrate::{CalibrationResult, DiagnosticsReport, GenerationRecord};
pub use selection::{Accum, Direction, ScoreSequence, SelectionOutput, SelectionSpec, SelectorKind};
pub use stepfn::{StepFunction, Threshold};

/// Scalar type underlying all scores, admissibilities, and thresholds.
///
/// A blanket implementation covers every floating-point type exposing the
/// `num_traits::Float` surface, i.e. `f32` and `f64`.
pub trait Real:
    num_traits::Float + fmt::Debug + fmt::Display + Send + Sync + 'static
{
}

impl<T> Real for T where T: num_traits::Float + fmt::Debug + fmt::Display + Send + Sync + 'static {}

/// Converts a count to the scalar type; counts in this crate are small
/// enough (dataset sizes) that the conversion cannot fail meaningfully.
pub(crate) fn count_to_real<T: Real>(n: usize) -> T {
    T::from(n).expect("count representable in scalar type")
}

/// Errors reported by calibration, selection, and evaluation.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A score sequence was empty; every record must generate at least one element.
    #[error("empty score sequence")]
    EmptySequence,

    /// An operation over a collection received no elements.
    #[error("empty {0}")]
    EmptyInput(&'static str),

    /// The score direction of the data does not match the selector's convention.
    #[error("selector requires direction {required} but scores are {found}")]
    DirectionMismatch {
        /// Direction the selector is defined for.
        required: Direction,
        /// Direction carried by the score sequence.
        found: Direction,
    },

    /// Sum-accumulated selectors require non-negative scores (nesting precondition).
    #[error("negative score at element {position}: sum-accumulated selectors require non-negative scores")]
    NegativeScore {
        /// 1-based element position of the offending score.
        position: usize,
    },

    /// A score or admissibility value was NaN or infinite.
    #[error("non-finite {field} at element {position}")]
    NonFinite {
        /// Which field held the non-finite value.
        field: &'static str,
        /// 1-based element position.
        position: usize,
    },

    /// Two per-element lists of the same record differ in length.
    #[error("{field} has length {found} but the record has {expected} elements")]
    LengthMismatch {
        /// The mismatched field.
        field: &'static str,
        /// Expected number of elements.
        expected: usize,
        /// Actual number of elements.
        found: usize,
    },

    /// A specification violated one of its named validity rules.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Input data violated a documented range or structure constraint.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The selector needs the whole sequence and cannot run over a stream.
    #[error("selector {0} requires the full sequence and does not support streaming")]
    StreamingUnsupported(&'static str),

    /// Deduplication was requested but the record carries no dedup keys.
    #[error("dedup requested but no dedup keys were provided")]
    DedupKeysMissing,

    /// Recall aggregation needs a normalizer (relevant-element count).
    #[error("recall aggregation requires a normalizer")]
    MissingNormalizer,
}

/// Convenience alias for results in this crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Step function over `f64`, the default precision.
pub type StepFn64 = StepFunction<f64>;
/// Step function over `f32`.
pub type StepFn32 = StepFunction<f32>;
/// Selection threshold over `f64`, the default precision.
pub type Threshold64 = Threshold<f64>;
/// Selection threshold over `f32`.
pub type Threshold32 = Threshold<f32>;
/// Calibration/test record over `f64`, the default precision.
pub type Record64 = GenerationRecord<f64>;
