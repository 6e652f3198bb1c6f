//! Sequence-level admissibility from per-element judgments.
//!
//! A generation's usefulness is judged one element at a time (`A′_t`, one
//! value per generated element) and aggregated over the *selected* subset
//! into the sequence-level admissibility `A`. Four aggregation rules cover
//! the catalog: the best selected element ([`Aggregator::Max`]), the worst
//! ([`Aggregator::Min`]), recall of the relevant elements
//! ([`Aggregator::Recall`]), and a count threshold
//! ([`Aggregator::CountAtLeast`]).
//!
//! The central construction is [`instance_profile`]: the map `λ ↦ A(λ)` for
//! one record, materialized exactly as a [`StepFunction`] by aggregating
//! the selection output once per breakpoint segment. Calibration averages
//! these profiles; nothing downstream re-evaluates `A′`.
//!
//! Judgments may live on a floor other than zero (values in
//! `[a_min, a_max]`). [`AdmissibilitySpec::a_min_shift`] moves them to
//! `[0, a_max − a_min]` on entry, and every quantity this module produces
//! stays in that shifted working scale; calibration adds the floor back
//! when reporting.

use serde::{Deserialize, Serialize};

use crate::selection::{self, ScoreSequence, SelectionSpec, SelectorKind};
use crate::stepfn::{StepFunction, Threshold};
use crate::{count_to_real, Error, Real, Result};

/// How selected per-element values combine into one sequence-level value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator<T> {
    /// The largest selected value; an empty selection yields 0.
    Max,
    /// The smallest selected value; an empty selection is vacuously
    /// admissible and yields the working-scale maximum.
    Min,
    /// Indicator that the selected values cover at least a `beta` fraction
    /// of the relevant total `N`, scaled to `{0, a_max}`.
    Recall {
        /// Required recall fraction, in `[0, 1]`.
        beta: T,
    },
    /// Indicator that the selected values sum to at least `k` (binary
    /// values expected), scaled to `{0, a_max}`.
    CountAtLeast {
        /// Required count, at least 1.
        k: usize,
    },
}

impl<T: std::fmt::Display> std::fmt::Display for Aggregator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Aggregator::Max => f.write_str("max"),
            Aggregator::Min => f.write_str("min"),
            Aggregator::Recall { beta } => write!(f, "recall(beta={beta})"),
            Aggregator::CountAtLeast { k } => write!(f, "count_at_least(k={k})"),
        }
    }
}

/// An aggregation rule plus the scale it operates on: the admissibility
/// ceiling `a_max`, the value credited when the system abstains (selects at
/// `λ = ∞`), and the optional floor shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilitySpec<T> {
    /// The aggregation rule.
    pub aggregator: Aggregator<T>,
    /// Upper bound of admissibility, in the original data scale.
    pub a_max: T,
    /// Admissibility credited to the abstention output, in the original
    /// data scale. Defaults to `a_max`, which keeps abstention admissible
    /// for every target level up to the ceiling.
    pub abstain_value: T,
    /// Floor of the original value range. Values are shifted down by this
    /// amount on entry so the working range is `[0, a_max − a_min_shift]`.
    pub a_min_shift: T,
}

impl<T: Real> AdmissibilitySpec<T> {
    /// Builds a spec with `abstain_value = a_max` and no floor shift.
    pub fn new(aggregator: Aggregator<T>, a_max: T) -> Result<Self> {
        let spec = Self {
            aggregator,
            a_max,
            abstain_value: a_max,
            a_min_shift: T::zero(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces the abstention value (original scale) and re-validates.
    pub fn with_abstain_value(mut self, abstain_value: T) -> Result<Self> {
        self.abstain_value = abstain_value;
        self.validate()?;
        Ok(self)
    }

    /// Sets the value floor (original scale) and re-validates.
    pub fn with_a_min_shift(mut self, a_min_shift: T) -> Result<Self> {
        self.a_min_shift = a_min_shift;
        self.validate()?;
        Ok(self)
    }

    /// Checks the cross-field invariants; all operations call this so that
    /// hand-assembled specs are vetted at first use.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_max", self.a_max),
            ("abstain_value", self.abstain_value),
            ("a_min_shift", self.a_min_shift),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite")));
            }
        }
        if self.a_max <= self.a_min_shift {
            return Err(Error::InvalidSpec(format!(
                "a_max ({}) must exceed the a_min shift ({})",
                self.a_max, self.a_min_shift
            )));
        }
        if self.abstain_value < self.a_min_shift || self.abstain_value > self.a_max {
            return Err(Error::InvalidSpec(format!(
                "abstain_value ({}) must lie in [{}, {}]",
                self.abstain_value, self.a_min_shift, self.a_max
            )));
        }
        match self.aggregator {
            Aggregator::Recall { beta } => {
                if !beta.is_finite() || beta < T::zero() || beta > T::one() {
                    return Err(Error::InvalidSpec(format!(
                        "recall beta ({beta}) must lie in [0, 1]"
                    )));
                }
            }
            Aggregator::CountAtLeast { k } => {
                if k == 0 {
                    return Err(Error::InvalidSpec(
                        "count_at_least k must be at least 1".to_string(),
                    ));
                }
            }
            Aggregator::Max | Aggregator::Min => {}
        }
        Ok(())
    }

    /// The admissibility ceiling in the shifted working scale.
    #[must_use]
    pub fn working_a_max(&self) -> T {
        self.a_max - self.a_min_shift
    }

    /// The abstention value in the shifted working scale.
    #[must_use]
    pub fn working_abstain(&self) -> T {
        self.abstain_value - self.a_min_shift
    }

    /// Validates one record's judgment values against this spec's range
    /// (`[a_min, a_max]` in the original scale).
    pub fn check_values(&self, adms: &InstanceAdmissibilities<T>) -> Result<()> {
        for (i, &v) in adms.values().iter().enumerate() {
            if v < self.a_min_shift || v > self.a_max {
                return Err(Error::InvalidData(format!(
                    "admissibility value {v} at position {} outside [{}, {}]",
                    i + 1,
                    self.a_min_shift,
                    self.a_max
                )));
            }
        }
        Ok(())
    }
}

/// Per-element admissibility judgments of one record, plus the optional
/// recall normalizer `N` (the count of relevant elements for this input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAdmissibilities<T> {
    values: Vec<T>,
    normalizer: Option<T>,
}

impl<T: Real> InstanceAdmissibilities<T> {
    /// Builds the judgment list, rejecting empty input, non-finite values,
    /// and a non-positive normalizer.
    pub fn new(values: Vec<T>, normalizer: Option<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("admissibility values"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    field: "admissibility value",
                    position: i + 1,
                });
            }
        }
        if let Some(n) = normalizer {
            if !n.is_finite() || n <= T::zero() {
                return Err(Error::InvalidData(format!(
                    "normalizer must be a positive finite number, got {n}"
                )));
            }
        }
        Ok(Self { values, normalizer })
    }

    /// The per-element values, in generation order (original scale).
    #[must_use]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// The explicit recall normalizer, when one was supplied.
    #[must_use]
    pub fn normalizer(&self) -> Option<T> {
        self.normalizer
    }

    /// Number of judged elements.
    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Always false: construction rejects empty lists.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The recall normalizer to use for this record: the explicit one when
    /// present, otherwise the sum of all values in the working scale.
    #[must_use]
    pub fn resolved_normalizer(&self, spec: &AdmissibilitySpec<T>) -> T {
        self.normalizer.unwrap_or_else(|| {
            self.values
                .iter()
                .fold(T::zero(), |acc, &v| acc + (v - spec.a_min_shift))
        })
    }
}

/// Whether this rule/aggregator pair yields profiles that are non-decreasing
/// in `λ` by construction (with binary values for the indicator
/// aggregators). Other pairs are still accepted — the relaxed theory covers
/// them — but calibration attaches a warning and the diagnostics quantify
/// any violation empirically.
#[must_use]
pub fn monotone_compatible<T: Real>(sel: &SelectionSpec, adm: &AdmissibilitySpec<T>) -> bool {
    match (sel.kind, adm.aggregator) {
        (
            SelectorKind::RunningMax | SelectorKind::RunningSum | SelectorKind::BelowLambda,
            Aggregator::Max,
        ) => true,
        (SelectorKind::AboveLambda, Aggregator::Min) => true,
        (
            SelectorKind::BelowLambda | SelectorKind::SmallestSubsetSum,
            Aggregator::Recall { .. } | Aggregator::CountAtLeast { .. },
        ) => true,
        _ => false,
    }
}

/// Aggregates the selected elements' values into one admissibility.
///
/// `selected_values` are the judgments of the selected indices in the
/// original scale; the result is in the shifted working scale (identical
/// when `a_min_shift = 0`). `normalizer` is consulted only by
/// [`Aggregator::Recall`] and must then be present — use
/// [`InstanceAdmissibilities::resolved_normalizer`] for the
/// sum-of-all-values default.
///
/// Empty selections resolve in the conservative direction of each rule:
/// `Max` yields 0 (nothing good was kept), `Min` yields the working ceiling
/// (no kept element is bad), and the indicator rules compare against an
/// empty sum.
pub fn aggregate<T: Real>(
    spec: &AdmissibilitySpec<T>,
    selected_values: &[T],
    normalizer: Option<T>,
) -> Result<T> {
    spec.validate()?;
    let shift = spec.a_min_shift;
    let ceiling = spec.working_a_max();
    let shifted = || selected_values.iter().map(move |&v| v - shift);
    match spec.aggregator {
        Aggregator::Max => Ok(shifted().reduce(|a, b| a.max(b)).unwrap_or_else(T::zero)),
        Aggregator::Min => Ok(shifted().reduce(|a, b| a.min(b)).unwrap_or(ceiling)),
        Aggregator::Recall { beta } => {
            let n = normalizer.ok_or(Error::MissingNormalizer)?;
            if !n.is_finite() || n < T::zero() {
                return Err(Error::InvalidData(format!(
                    "recall normalizer must be a non-negative finite number, got {n}"
                )));
            }
            let sum = shifted().fold(T::zero(), |acc, v| acc + v);
            // Multiplicative form: vacuously true when nothing is relevant.
            Ok(if sum >= beta * n { ceiling } else { T::zero() })
        }
        Aggregator::CountAtLeast { k } => {
            let sum = shifted().fold(T::zero(), |acc, v| acc + v);
            Ok(if sum >= count_to_real(k) {
                ceiling
            } else {
                T::zero()
            })
        }
    }
}

/// The exact admissibility profile `λ ↦ A(λ)` of one record.
///
/// Breakpoints come from the selection rule; each segment's value is the
/// aggregation of the selection evaluated at the segment's left endpoint
/// (right-continuous, so the value holds on the whole segment). The value
/// at `λ = ∞` is the abstention value — at that point the system abstains
/// instead of running the selector. All values are in the shifted working
/// scale.
///
/// `dedup_keys` must be supplied when the selection spec enables
/// deduplication, exactly as for [`selection::select`].
pub fn instance_profile<T: Real>(
    scores: &ScoreSequence<T>,
    adms: &InstanceAdmissibilities<T>,
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    dedup_keys: Option<&[String]>,
) -> Result<StepFunction<T>> {
    adm.validate()?;
    if adms.len() != scores.len() {
        return Err(Error::LengthMismatch {
            field: "admissibility values",
            expected: scores.len(),
            found: adms.len(),
        });
    }
    adm.check_values(adms)?;
    let normalizer = match adm.aggregator {
        Aggregator::Recall { .. } => Some(adms.resolved_normalizer(adm)),
        _ => None,
    };
    let breakpoints = selection::breakpoints(sel, scores)?;
    let eval_at = |lambda: Threshold<T>| -> Result<T> {
        let out = selection::select(sel, scores, lambda, dedup_keys)?;
        let selected: Vec<T> = out.indices.iter().map(|&t| adms.values()[t - 1]).collect();
        aggregate(adm, &selected, normalizer)
    };
    let mut segment_values = Vec::with_capacity(breakpoints.len() + 1);
    segment_values.push(eval_at(Threshold::NegInf)?);
    for &b in &breakpoints {
        segment_values.push(eval_at(Threshold::Finite(b))?);
    }
    StepFunction::new(breakpoints, segment_values, adm.working_abstain())
}
