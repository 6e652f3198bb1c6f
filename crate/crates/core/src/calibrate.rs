//! Threshold calibration with a finite-sample admissibility guarantee.
//!
//! Given `n` exchangeable calibration records, [`calibrate`] finds the
//! smallest threshold whose *average calibration admissibility* reaches the
//! inflated level `(n+1)/n · γ`, falling back to `∞` (abstention) when no
//! finite threshold does. Under exchangeability the expected admissibility
//! of the calibrated selection on a fresh record is then at least `γ`.
//!
//! Because every record's admissibility profile is an exact step function,
//! the average is one too, and the infimum is found by a breakpoint scan —
//! no grid, no tolerance. Two special cases are provided for reference and
//! cross-checking: [`cp_quantile`] (split conformal prediction, where the
//! answer is an order statistic) and [`crc_calibrate`] (conformal risk
//! control over arbitrary utility profiles, capped at a finite `λ_max`).
//!
//! [`upper_bound_diag`] estimates how far above `γ` the expected
//! admissibility can overshoot: the bound is `γ + a_max/(n+1) + H`, where
//! `H` measures the jump of the average profile at the critical threshold.

use serde::{Deserialize, Serialize};

use crate::admissibility::{
    instance_profile, monotone_compatible, AdmissibilitySpec, InstanceAdmissibilities,
};
use crate::selection::{ScoreSequence, SelectionSpec};
use crate::stepfn::{StepFunction, Threshold};
use crate::{count_to_real, Error, Real, Result};

/// One calibration example: scores and per-element judgments for the same
/// generated sequence, plus optional duplicate keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord<T> {
    /// Caller-supplied identifier, echoed in reports and error messages.
    pub id: String,
    /// Per-element scores, in generation order.
    pub scores: ScoreSequence<T>,
    /// Per-element admissibility judgments, aligned with the scores.
    pub adms: InstanceAdmissibilities<T>,
    /// Per-element duplicate keys, when deduplication is in play.
    pub dedup_keys: Option<Vec<String>>,
}

impl<T: Real> GenerationRecord<T> {
    /// Builds a record, enforcing that all per-element lists are aligned.
    pub fn new(
        id: impl Into<String>,
        scores: ScoreSequence<T>,
        adms: InstanceAdmissibilities<T>,
        dedup_keys: Option<Vec<String>>,
    ) -> Result<Self> {
        if adms.len() != scores.len() {
            return Err(Error::LengthMismatch {
                field: "admissibility values",
                expected: scores.len(),
                found: adms.len(),
            });
        }
        if let Some(keys) = &dedup_keys {
            if keys.len() != scores.len() {
                return Err(Error::LengthMismatch {
                    field: "dedup keys",
                    expected: scores.len(),
                    found: keys.len(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            scores,
            adms,
            dedup_keys,
        })
    }

    /// This record's exact admissibility profile under the given specs.
    pub fn profile(
        &self,
        sel: &SelectionSpec,
        adm: &AdmissibilitySpec<T>,
    ) -> Result<StepFunction<T>> {
        instance_profile(&self.scores, &self.adms, sel, adm, self.dedup_keys.as_deref())
    }
}

/// The outcome of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct CalibrationResult<T> {
    /// The calibrated threshold; `∞` means "always abstain".
    pub lambda_hat: Threshold<T>,
    /// The requested admissibility level, as given.
    pub gamma: T,
    /// The level the calibration average had to reach: `(n+1)/n · γ`
    /// (computed on the shifted scale when a floor shift is configured,
    /// then reported back on the original scale).
    pub threshold: T,
    /// The calibration average at `lambda_hat`, on the original scale. At
    /// least `threshold` unless `lambda_hat` is `∞` (the abstention
    /// fallback, where the average may sit below the level).
    pub achieved: T,
    /// Number of calibration records.
    pub n: usize,
    /// The calibration average at every merged breakpoint, for inspection
    /// and plotting: pairs of (threshold value, average admissibility).
    pub trace: Vec<(T, T)>,
    /// Non-fatal conditions worth surfacing (vacuous targets, possibly
    /// non-monotone profiles, heavily shared breakpoints).
    pub warnings: Vec<String>,
}

/// Diagnostics for the admissibility upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct DiagnosticsReport<T> {
    /// Smallest threshold whose average (over all supplied records)
    /// reaches `γ` — no finite-sample inflation.
    pub lambda_star: Threshold<T>,
    /// Smallest threshold whose average reaches `γ + a_max/(n+1)`.
    pub lambda_star_star: Threshold<T>,
    /// Jump of the average profile at `lambda_star_star`: the value there
    /// minus the supremum strictly below, floored at zero.
    pub h: T,
    /// `γ + a_max/(n+1) + h`: the ceiling on expected admissibility of the
    /// calibrated selection.
    pub upper_bound: T,
    /// Share of records whose individual profile is non-decreasing — a
    /// Monte Carlo proxy for the monotonicity condition, not a proof.
    pub monotone_fraction: T,
    /// Non-fatal conditions worth surfacing.
    pub warnings: Vec<String>,
}

/// Validates a target admissibility level: finite and non-negative.
fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !gamma.is_finite() || gamma < T::zero() {
        return Err(Error::InvalidSpec(format!(
            "gamma must be a finite non-negative number, got {gamma}"
        )));
    }
    Ok(())
}

/// The inflated calibration level `(n+1)/n · γ`, evaluated in the fixed
/// order `((n+1)·γ)/n` so that it agrees bitwise with the conformal
/// quantile's `⌈(n+1)γ⌉` arithmetic.
fn inflated_level<T: Real>(n: usize, gamma: T) -> T {
    count_to_real::<T>(n + 1) * gamma / count_to_real::<T>(n)
}

/// One admissibility profile per record.
fn build_profiles<T: Real>(
    records: &[GenerationRecord<T>],
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
) -> Result<Vec<StepFunction<T>>> {
    records.iter().map(|r| r.profile(sel, adm)).collect()
}

/// Fraction of distinct breakpoint values that occur in more than one
/// record's profile. Shared jumps are what inflate the upper-bound slack.
fn shared_breakpoint_counts<T: Real>(profiles: &[StepFunction<T>]) -> (usize, usize) {
    let mut tagged: Vec<(T, usize)> = profiles
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.breakpoints().iter().map(move |&b| (b, i)))
        .collect();
    tagged.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("breakpoints are finite"));
    let mut distinct = 0;
    let mut shared = 0;
    let mut i = 0;
    while i < tagged.len() {
        let mut j = i + 1;
        let mut multi_record = false;
        while j < tagged.len() && tagged[j].0 == tagged[i].0 {
            multi_record |= tagged[j].1 != tagged[i].1;
            j += 1;
        }
        distinct += 1;
        if multi_record {
            shared += 1;
        }
        i = j;
    }
    (shared, distinct)
}

/// Calibrates the selection threshold to guarantee expected admissibility
/// at least `gamma` on a fresh exchangeable record.
///
/// Returns the smallest threshold where the average calibration
/// admissibility reaches `(n+1)/n · γ`; `∞` (abstention) when no finite
/// threshold qualifies. When the spec carries a floor shift, both the
/// judgments and `gamma` are shifted before the comparison and the reported
/// `threshold`/`achieved`/`trace` values are shifted back.
pub fn calibrate<T: Real>(
    records: &[GenerationRecord<T>],
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    gamma: T,
) -> Result<CalibrationResult<T>> {
    check_gamma(gamma)?;
    adm.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyInput("calibration records"));
    }
    let profiles = build_profiles(records, sel, adm)?;
    let mean = StepFunction::mean(&profiles)?;
    let n = records.len();
    let shift = adm.a_min_shift;
    let gamma_w = gamma - shift;
    let level = inflated_level(n, gamma_w);
    let lambda_hat = mean.inf_at_least(level);
    let achieved = mean.eval(lambda_hat) + shift;
    let trace: Vec<(T, T)> = mean
        .breakpoints()
        .iter()
        .zip(&mean.segment_values()[1..])
        .map(|(&b, &v)| (b, v + shift))
        .collect();

    let mut warnings = Vec::new();
    if gamma_w > adm.working_a_max() {
        warnings.push(format!(
            "target level {gamma} exceeds the admissibility ceiling {}; the guarantee is \
             vacuous and calibration abstains",
            adm.a_max
        ));
    }
    if adm.abstain_value < gamma {
        warnings.push(format!(
            "abstention value {} sits below the target level {gamma}; abstaining does not \
             secure the guarantee",
            adm.abstain_value
        ));
    }
    if !monotone_compatible(sel, adm) {
        warnings.push(format!(
            "selector {} with aggregator {} can produce non-monotone profiles; the relaxed \
             guarantee applies — check the diagnostics",
            sel.kind.name(),
            adm.aggregator
        ));
    }
    let (shared, distinct) = shared_breakpoint_counts(&profiles);
    if shared * 10 > distinct {
        warnings.push(format!(
            "{shared} of {distinct} distinct breakpoints are shared across records, which \
             can inflate the upper-bound slack"
        ));
    }

    Ok(CalibrationResult {
        lambda_hat,
        gamma,
        threshold: level + shift,
        achieved,
        n,
        trace,
        warnings,
    })
}

/// The split conformal prediction quantile: the `⌈(n+1)γ⌉`-th smallest
/// score, or `∞` when that rank exceeds `n`.
///
/// This is the classical calibration rule for prediction sets; encoding it
/// as a single-element selection problem and running [`calibrate`]
/// reproduces it exactly.
pub fn cp_quantile<T: Real>(scores_of_truth: &[T], gamma: T) -> Result<Threshold<T>> {
    if scores_of_truth.is_empty() {
        return Err(Error::EmptyInput("calibration scores"));
    }
    if !gamma.is_finite() || gamma <= T::zero() || gamma > T::one() {
        return Err(Error::InvalidSpec(format!(
            "gamma must lie in (0, 1], got {gamma}"
        )));
    }
    for (i, s) in scores_of_truth.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::NonFinite {
                field: "score",
                position: i + 1,
            });
        }
    }
    let n = scores_of_truth.len();
    let rank = (count_to_real::<T>(n + 1) * gamma).ceil();
    let k = num_traits::cast::<T, usize>(rank).expect("rank of a validated gamma is a small integer");
    if k > n {
        return Ok(Threshold::PosInf);
    }
    let mut sorted = scores_of_truth.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    Ok(Threshold::Finite(sorted[k - 1]))
}

/// Conformal risk control over arbitrary utility profiles: the smallest
/// `λ ≤ λ_max` whose average utility reaches `(n+1)/n · γ`, capped at
/// `λ_max` when no such threshold exists.
pub fn crc_calibrate<T: Real>(
    utility_profiles: &[StepFunction<T>],
    gamma: T,
    lambda_max: T,
) -> Result<Threshold<T>> {
    if utility_profiles.is_empty() {
        return Err(Error::EmptyInput("utility profiles"));
    }
    if !lambda_max.is_finite() {
        return Err(Error::InvalidSpec("lambda_max must be finite".to_string()));
    }
    let mean = StepFunction::mean(utility_profiles)?;
    let level = inflated_level(utility_profiles.len(), gamma);
    Ok(match mean.inf_at_least(level) {
        Threshold::NegInf => Threshold::NegInf,
        Threshold::Finite(x) if x <= lambda_max => Threshold::Finite(x),
        _ => Threshold::Finite(lambda_max),
    })
}

/// Estimates the admissibility upper bound from `n + 1` records (typically
/// the calibration set plus one held-out record).
///
/// Reports the critical thresholds `λ*` (average reaches `γ`) and `λ**`
/// (average reaches `γ + a_max/(n+1)`), the jump `H` of the average at
/// `λ**`, the resulting ceiling `γ + a_max/(n+1) + H`, and the share of
/// individually monotone profiles.
pub fn upper_bound_diag<T: Real>(
    records_plus_one: &[GenerationRecord<T>],
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    gamma: T,
) -> Result<DiagnosticsReport<T>> {
    check_gamma(gamma)?;
    adm.validate()?;
    if records_plus_one.len() < 2 {
        return Err(Error::InvalidData(format!(
            "upper-bound diagnostics need at least 2 records, got {}",
            records_plus_one.len()
        )));
    }
    let profiles = build_profiles(records_plus_one, sel, adm)?;
    let mean = StepFunction::mean(&profiles)?;
    let shift = adm.a_min_shift;
    let gamma_w = gamma - shift;
    let slack = adm.working_a_max() / count_to_real::<T>(records_plus_one.len());
    let lambda_star = mean.inf_at_least(gamma_w);
    let lambda_star_star = mean.inf_at_least(gamma_w + slack);
    let jump = mean.eval(lambda_star_star) - mean.sup_strictly_below(lambda_star_star);
    let h = if jump > T::zero() { jump } else { T::zero() };
    let monotone = profiles.iter().filter(|p| p.is_non_decreasing()).count();
    let monotone_fraction =
        count_to_real::<T>(monotone) / count_to_real::<T>(profiles.len());

    let mut warnings = Vec::new();
    let (shared, distinct) = shared_breakpoint_counts(&profiles);
    if shared * 10 > distinct {
        warnings.push(format!(
            "{shared} of {distinct} distinct breakpoints are shared across records, which \
             can inflate the jump term H"
        ));
    }

    Ok(DiagnosticsReport {
        lambda_star,
        lambda_star_star,
        h,
        upper_bound: gamma + slack + h,
        monotone_fraction,
        warnings,
    })
}
