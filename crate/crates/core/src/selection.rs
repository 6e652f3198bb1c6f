//! The catalog of threshold-indexed selection rules `C_λ`.
//!
//! Each rule maps a scored generation sequence and a threshold `λ` to a
//! subset of element indices, growing more conservative as `λ` increases.
//! Two families exist:
//!
//! - **stopping-time rules** (`RunningMax`, `RunningSum`,
//!   `RunningMaxSingle`, `SmallestSubsetSum`) consume elements until an
//!   accumulated score strictly exceeds `λ` — the stopping index `τ` is the
//!   first `t ≥ 1` with `accum(S₁,…,S_t) > λ`, capped at the sequence
//!   length;
//! - **threshold rules** (`BelowLambda`, `AboveLambda`) keep every element
//!   whose individual score clears `λ`.
//!
//! Because each rule's output changes only at finitely many `λ` values, the
//! module also enumerates those breakpoints exactly; they are the candidate
//! set over which calibration searches. Breakpoints are verified by change
//! detection — a candidate is kept only if the output at the candidate
//! differs from the output in the limit from the left — so the list is
//! correct even for tied scores or non-monotone accumulations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::stepfn::Threshold;
use crate::{Error, Real, Result};

/// Score orientation: whether larger or smaller scores indicate better
/// generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Larger is better (`S↑`).
    Up,
    /// Smaller is better (`S↓`).
    Down,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
        })
    }
}

/// Accumulation rule for stopping-time selectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accum {
    /// Running maximum of the scores seen so far.
    Max,
    /// Running sum of the scores seen so far.
    Sum,
}

/// The selection rules in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    /// Prefix `y₁..y_τ` with `τ` driven by the running maximum.
    RunningMax,
    /// Prefix `y₁..y_τ` with `τ` driven by the running sum (non-negative scores).
    RunningSum,
    /// All elements with score `≤ λ` (down-scored sequences).
    BelowLambda,
    /// All elements with score `> λ` (up-scored sequences).
    AboveLambda,
    /// The single element `y_τ` with `τ` driven by the running maximum.
    RunningMaxSingle,
    /// The smallest set of elements whose score sum exceeds `λ`
    /// (descending-score order, ties by original position); the whole
    /// sequence when even the total does not exceed `λ`.
    SmallestSubsetSum,
}

impl SelectorKind {
    /// Stable name used in error messages and serialized configs.
    #[must_use]
    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::RunningMax => "running_max",
            SelectorKind::RunningSum => "running_sum",
            SelectorKind::BelowLambda => "below_lambda",
            SelectorKind::AboveLambda => "above_lambda",
            SelectorKind::RunningMaxSingle => "running_max_single",
            SelectorKind::SmallestSubsetSum => "smallest_subset_sum",
        }
    }

    /// The score direction this rule is defined for.
    #[must_use]
    pub fn required_direction(self) -> Direction {
        match self {
            SelectorKind::BelowLambda => Direction::Down,
            _ => Direction::Up,
        }
    }

    /// The accumulation rule, for the stopping-time family.
    #[must_use]
    pub fn accum(self) -> Option<Accum> {
        match self {
            SelectorKind::RunningMax | SelectorKind::RunningMaxSingle => Some(Accum::Max),
            SelectorKind::RunningSum | SelectorKind::SmallestSubsetSum => Some(Accum::Sum),
            SelectorKind::BelowLambda | SelectorKind::AboveLambda => None,
        }
    }

    /// Whether the rule can run over a stream, deciding after each pull.
    ///
    /// `BelowLambda`, `AboveLambda`, and `SmallestSubsetSum` need the whole
    /// sequence before selecting anything.
    #[must_use]
    pub fn supports_partial_generation(self) -> bool {
        matches!(
            self,
            SelectorKind::RunningMax | SelectorKind::RunningSum | SelectorKind::RunningMaxSingle
        )
    }
}

/// Per-element scores of one generation sequence, in generation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSequence<T> {
    scores: Vec<T>,
    direction: Direction,
}

impl<T: Real> ScoreSequence<T> {
    /// Builds a sequence, rejecting empty input and non-finite scores.
    pub fn new(scores: Vec<T>, direction: Direction) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptySequence);
        }
        for (i, s) in scores.iter().enumerate() {
            if !s.is_finite() {
                return Err(Error::NonFinite {
                    field: "score",
                    position: i + 1,
                });
            }
        }
        Ok(Self { scores, direction })
    }

    /// The scores, in generation order.
    #[must_use]
    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    /// The score orientation.
    #[must_use]
    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of elements.
    #[must_use]
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    /// Always false: construction rejects empty sequences.
    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// A validated selection configuration: the rule, its score direction, and
/// the optional duplicate-dropping post-processing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSpec {
    /// Which rule from the catalog.
    pub kind: SelectorKind,
    /// Score direction; must match the rule's convention.
    pub direction: Direction,
    /// Drop later elements whose dedup key repeats an earlier selected one.
    pub dedup: bool,
}

impl SelectionSpec {
    /// Builds a spec, enforcing the direction convention of the rule.
    pub fn new(kind: SelectorKind, direction: Direction) -> Result<Self> {
        let required = kind.required_direction();
        if direction != required {
            return Err(Error::InvalidSpec(format!(
                "selector {} requires direction {required}, got {direction}",
                kind.name()
            )));
        }
        Ok(Self {
            kind,
            direction,
            dedup: false,
        })
    }

    /// Convenience constructor using the rule's required direction.
    pub fn for_kind(kind: SelectorKind) -> Self {
        Self {
            kind,
            direction: kind.required_direction(),
            dedup: false,
        }
    }

    /// Enables or disables the duplicate-dropping wrapper.
    #[must_use]
    pub fn with_dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    /// Validates a score sequence against this spec: direction match, plus
    /// non-negative scores for the sum-accumulated prefix rule (its nesting
    /// guarantee needs them).
    pub fn check_scores<T: Real>(&self, seq: &ScoreSequence<T>) -> Result<()> {
        if seq.direction() != self.direction {
            return Err(Error::DirectionMismatch {
                required: self.direction,
                found: seq.direction(),
            });
        }
        if self.kind == SelectorKind::RunningSum {
            if let Some(i) = seq.scores().iter().position(|s| *s < T::zero()) {
                return Err(Error::NegativeScore { position: i + 1 });
            }
        }
        Ok(())
    }
}

/// The outcome of one selection: which elements were chosen and how many
/// sequence elements had to be consumed to decide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOutput {
    /// 1-based element indices, in ascending sequence order for set-valued
    /// rules and prefix order for stopping-time rules. May be empty.
    pub indices: Vec<usize>,
    /// Elements consumed: the stopping index `τ` for stopping-time rules
    /// that can decide early, the full length otherwise.
    pub pulled_count: usize,
}

/// Where a selection is evaluated: at a threshold, or in the limit from the
/// left of a finite point (used for breakpoint change detection).
#[derive(Clone, Copy)]
enum Cut<T> {
    At(Threshold<T>),
    LeftOf(T),
}

impl<T: Real> Cut<T> {
    /// Strict crossing test `value > λ` (stopping rules, above-threshold rule).
    fn exceeded_by(self, value: T) -> bool {
        match self {
            Cut::At(Threshold::NegInf) => true,
            Cut::At(Threshold::PosInf) => false,
            Cut::At(Threshold::Finite(x)) => value > x,
            // For every λ < x: value > λ ⇔ value ≥ x.
            Cut::LeftOf(x) => value >= x,
        }
    }

    /// Inclusion test `value ≤ λ` (below-threshold rule).
    fn admits(self, value: T) -> bool {
        match self {
            Cut::At(Threshold::NegInf) => false,
            Cut::At(Threshold::PosInf) => true,
            Cut::At(Threshold::Finite(x)) => value <= x,
            // For every λ < x: value ≤ λ ⇔ value < x.
            Cut::LeftOf(x) => value < x,
        }
    }
}

/// The stopping index `τ`: the smallest `t ≥ 1` whose accumulated score
/// strictly exceeds `λ`, capped at the sequence length when no prefix
/// crosses. `λ = NegInf` gives `τ = 1`, `λ = PosInf` gives `τ = len`.
pub fn stopping_time<T: Real>(
    seq: &ScoreSequence<T>,
    lambda: Threshold<T>,
    accum: Accum,
) -> Result<usize> {
    if seq.direction() != Direction::Up {
        return Err(Error::DirectionMismatch {
            required: Direction::Up,
            found: seq.direction(),
        });
    }
    if accum == Accum::Sum {
        if let Some(i) = seq.scores().iter().position(|s| *s < T::zero()) {
            return Err(Error::NegativeScore { position: i + 1 });
        }
    }
    Ok(stopping_time_at(seq.scores(), Cut::At(lambda), accum))
}

/// Core stopping scan over raw scores; `cut` decides the crossing test.
fn stopping_time_at<T: Real>(scores: &[T], cut: Cut<T>, accum: Accum) -> usize {
    let mut acc = scores[0];
    if cut.exceeded_by(acc) {
        return 1;
    }
    for (t, &s) in scores.iter().enumerate().skip(1) {
        acc = match accum {
            Accum::Max => {
                if s > acc {
                    s
                } else {
                    acc
                }
            }
            Accum::Sum => acc + s,
        };
        if cut.exceeded_by(acc) {
            return t + 1;
        }
    }
    scores.len()
}

/// Indices ordered by descending score, ties broken by ascending original
/// position — the canonical order for the smallest-subset rule.
fn descending_score_order<T: Real>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are never NaN")
            .then(a.cmp(&b))
    });
    order
}

/// Raw selection at a cut, before deduplication. Returns (1-based indices,
/// pulled count).
fn select_at_cut<T: Real>(
    kind: SelectorKind,
    scores: &[T],
    cut: Cut<T>,
) -> (Vec<usize>, usize) {
    let len = scores.len();
    match kind {
        SelectorKind::RunningMax | SelectorKind::RunningSum => {
            let accum = kind.accum().expect("stopping rule has an accumulator");
            let tau = stopping_time_at(scores, cut, accum);
            ((1..=tau).collect(), tau)
        }
        SelectorKind::RunningMaxSingle => {
            let tau = stopping_time_at(scores, cut, Accum::Max);
            (vec![tau], tau)
        }
        SelectorKind::BelowLambda => {
            let indices = (1..=len).filter(|&t| cut.admits(scores[t - 1])).collect();
            (indices, len)
        }
        SelectorKind::AboveLambda => {
            let indices = (1..=len)
                .filter(|&t| cut.exceeded_by(scores[t - 1]))
                .collect();
            (indices, len)
        }
        SelectorKind::SmallestSubsetSum => {
            let order = descending_score_order(scores);
            let sorted: Vec<T> = order.iter().map(|&i| scores[i]).collect();
            let tau = stopping_time_at(&sorted, cut, Accum::Sum);
            let mut indices: Vec<usize> = order[..tau].iter().map(|&i| i + 1).collect();
            indices.sort_unstable();
            (indices, len)
        }
    }
}

/// Keeps the first occurrence of each dedup key, in reported index order.
fn dedup_indices(indices: Vec<usize>, keys: &[String]) -> Vec<usize> {
    let mut seen: HashSet<&str> = HashSet::with_capacity(indices.len());
    indices
        .into_iter()
        .filter(|&t| seen.insert(keys[t - 1].as_str()))
        .collect()
}

/// Evaluates the selection rule at threshold `lambda`.
///
/// `dedup_keys`, when the spec enables deduplication, must supply one opaque
/// key per element; later selected elements repeating an earlier key are
/// dropped. Indices in the output are 1-based.
pub fn select<T: Real>(
    spec: &SelectionSpec,
    seq: &ScoreSequence<T>,
    lambda: Threshold<T>,
    dedup_keys: Option<&[String]>,
) -> Result<SelectionOutput> {
    spec.check_scores(seq)?;
    if let Some(keys) = dedup_keys {
        if keys.len() != seq.len() {
            return Err(Error::LengthMismatch {
                field: "dedup keys",
                expected: seq.len(),
                found: keys.len(),
            });
        }
    }
    let (mut indices, pulled_count) = select_at_cut(spec.kind, seq.scores(), Cut::At(lambda));
    if spec.dedup {
        let keys = dedup_keys.ok_or(Error::DedupKeysMissing)?;
        indices = dedup_indices(indices, keys);
    }
    Ok(SelectionOutput {
        indices,
        pulled_count,
    })
}

/// The exact, sorted set of λ values at which the rule's output changes.
///
/// Candidates are the finitely many values the relevant comparison can turn
/// on — distinct scores for threshold rules, distinct accumulated scores for
/// stopping rules — and a candidate is kept only when the output at the
/// candidate differs from the output just below it. The rule is therefore
/// constant on `(−∞, b₁)` and on every `[b_j, b_{j+1})`.
pub fn breakpoints<T: Real>(spec: &SelectionSpec, seq: &ScoreSequence<T>) -> Result<Vec<T>> {
    spec.check_scores(seq)?;
    let scores = seq.scores();
    let mut candidates: Vec<T> = match spec.kind {
        SelectorKind::BelowLambda | SelectorKind::AboveLambda => scores.to_vec(),
        SelectorKind::RunningMax | SelectorKind::RunningMaxSingle => {
            accumulated_values(scores, Accum::Max)
        }
        SelectorKind::RunningSum => accumulated_values(scores, Accum::Sum),
        SelectorKind::SmallestSubsetSum => {
            let order = descending_score_order(scores);
            let sorted: Vec<T> = order.iter().map(|&i| scores[i]).collect();
            accumulated_values(&sorted, Accum::Sum)
        }
    };
    candidates.sort_by(|a, b| a.partial_cmp(b).expect("scores are never NaN"));
    candidates.dedup();
    candidates.retain(|&b| {
        select_at_cut(spec.kind, scores, Cut::At(Threshold::Finite(b))).0
            != select_at_cut(spec.kind, scores, Cut::LeftOf(b)).0
    });
    Ok(candidates)
}

/// The sequence of accumulated scores, one per prefix length.
fn accumulated_values<T: Real>(scores: &[T], accum: Accum) -> Vec<T> {
    let mut acc = scores[0];
    let mut out = Vec::with_capacity(scores.len());
    out.push(acc);
    for &s in &scores[1..] {
        acc = match accum {
            Accum::Max => {
                if s > acc {
                    s
                } else {
                    acc
                }
            }
            Accum::Sum => acc + s,
        };
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn up(scores: &[f64]) -> ScoreSequence<f64> {
        ScoreSequence::new(scores.to_vec(), Direction::Up).unwrap()
    }

    fn down(scores: &[f64]) -> ScoreSequence<f64> {
        ScoreSequence::new(scores.to_vec(), Direction::Down).unwrap()
    }

    fn fin(x: f64) -> Threshold<f64> {
        Threshold::Finite(x)
    }

    fn run(kind: SelectorKind, seq: &ScoreSequence<f64>, lambda: Threshold<f64>) -> Vec<usize> {
        select(&SelectionSpec::for_kind(kind), seq, lambda, None)
            .unwrap()
            .indices
    }

    #[test]
    fn stopping_time_crosses_at_first_exceeding_prefix() {
        let seq = up(&[0.2, 0.5, 0.3]);
        assert_eq!(stopping_time(&seq, fin(0.4), Accum::Max).unwrap(), 2);
    }

    #[test]
    fn stopping_time_caps_at_length_without_crossing() {
        let seq = up(&[0.2, 0.5, 0.3]);
        assert_eq!(stopping_time(&seq, fin(0.6), Accum::Max).unwrap(), 3);
    }

    #[test]
    fn stopping_time_with_sum_accumulator() {
        let seq = up(&[1.0, 1.0, 2.0]);
        assert_eq!(stopping_time(&seq, fin(1.5), Accum::Sum).unwrap(), 2);
    }

    #[test]
    fn stopping_time_at_infinities() {
        let seq = up(&[0.2, 0.5, 0.3]);
        assert_eq!(stopping_time(&seq, Threshold::NegInf, Accum::Max).unwrap(), 1);
        assert_eq!(stopping_time(&seq, Threshold::PosInf, Accum::Max).unwrap(), 3);
    }

    #[test]
    fn stopping_time_rejects_down_scores_and_negative_sums() {
        let seq = down(&[0.2]);
        assert!(matches!(
            stopping_time(&seq, fin(0.0), Accum::Max),
            Err(Error::DirectionMismatch { .. })
        ));
        let seq = up(&[0.2, -0.1]);
        assert!(matches!(
            stopping_time(&seq, fin(0.0), Accum::Sum),
            Err(Error::NegativeScore { position: 2 })
        ));
    }

    #[test]
    fn smallest_subset_sum_picks_top_scorer_first() {
        let seq = up(&[1.0, 1.0, 2.0]);
        assert_eq!(run(SelectorKind::SmallestSubsetSum, &seq, fin(1.5)), [3]);
    }

    #[test]
    fn smallest_subset_sum_grows_at_jump_with_tie_by_position() {
        let seq = up(&[1.0, 1.0, 2.0]);
        assert_eq!(run(SelectorKind::SmallestSubsetSum, &seq, fin(2.0)), [1, 3]);
    }

    #[test]
    fn smallest_subset_sum_returns_all_when_total_insufficient() {
        let seq = up(&[1.0, 1.0, 2.0]);
        assert_eq!(
            run(SelectorKind::SmallestSubsetSum, &seq, fin(10.0)),
            [1, 2, 3]
        );
    }

    #[test]
    fn below_lambda_can_select_nothing() {
        let seq = down(&[-1.0, -1.0, -2.0]);
        assert_eq!(run(SelectorKind::BelowLambda, &seq, fin(-2.5)), [] as [usize; 0]);
    }

    #[test]
    fn below_lambda_selects_everything_at_top_score() {
        let seq = down(&[-1.0, -1.0, -2.0]);
        assert_eq!(run(SelectorKind::BelowLambda, &seq, fin(-1.0)), [1, 2, 3]);
    }

    #[test]
    fn above_lambda_uses_strict_exceedance() {
        let seq = up(&[0.1, 0.7, 0.4]);
        assert_eq!(run(SelectorKind::AboveLambda, &seq, fin(0.4)), [2]);
        assert_eq!(run(SelectorKind::AboveLambda, &seq, fin(0.39)), [2, 3]);
    }

    #[test]
    fn running_max_single_returns_stopping_element() {
        let seq = up(&[0.2, 0.5, 0.3]);
        assert_eq!(run(SelectorKind::RunningMaxSingle, &seq, fin(0.4)), [2]);
    }

    #[test]
    fn running_prefix_rules_report_tau_as_pulled_count() {
        let seq = up(&[0.2, 0.5, 0.3]);
        let out = select(
            &SelectionSpec::for_kind(SelectorKind::RunningMax),
            &seq,
            fin(0.4),
            None,
        )
        .unwrap();
        assert_eq!(out.indices, [1, 2]);
        assert_eq!(out.pulled_count, 2);

        let out = select(
            &SelectionSpec::for_kind(SelectorKind::BelowLambda),
            &down(&[-1.0, -2.0]),
            fin(-1.5),
            None,
        )
        .unwrap();
        assert_eq!(out.pulled_count, 2);
    }

    #[test]
    fn dedup_keeps_first_occurrence_of_each_key() {
        let seq = up(&[0.1, 0.2, 0.9]);
        let keys: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let spec = SelectionSpec::for_kind(SelectorKind::RunningMax).with_dedup(true);
        let out = select(&spec, &seq, fin(0.5), Some(&keys)).unwrap();
        assert_eq!(out.indices, [1, 3]);
        assert_eq!(out.pulled_count, 3);
    }

    #[test]
    fn dedup_without_keys_is_an_error() {
        let seq = up(&[0.1]);
        let spec = SelectionSpec::for_kind(SelectorKind::RunningMax).with_dedup(true);
        assert!(matches!(
            select(&spec, &seq, fin(0.5), None),
            Err(Error::DedupKeysMissing)
        ));
    }

    #[test]
    fn spec_rejects_wrong_direction() {
        assert!(SelectionSpec::new(SelectorKind::BelowLambda, Direction::Up).is_err());
        assert!(SelectionSpec::new(SelectorKind::RunningMax, Direction::Down).is_err());
        assert!(SelectionSpec::new(SelectorKind::BelowLambda, Direction::Down).is_ok());
    }

    #[test]
    fn breakpoints_of_smallest_subset_sum_drop_the_capped_total() {
        let seq = up(&[1.0, 1.0, 2.0]);
        let spec = SelectionSpec::for_kind(SelectorKind::SmallestSubsetSum);
        // Sorted-descending partial sums are 2, 3, 4, but at λ = 4 the
        // output is already the full set, so only 2 and 3 are jumps.
        assert_eq!(breakpoints(&spec, &seq).unwrap(), [2.0, 3.0]);
    }

    #[test]
    fn breakpoints_of_below_lambda_are_distinct_scores() {
        let seq = down(&[-1.0, -1.0, -2.0]);
        let spec = SelectionSpec::for_kind(SelectorKind::BelowLambda);
        assert_eq!(breakpoints(&spec, &seq).unwrap(), [-2.0, -1.0]);
    }

    #[test]
    fn breakpoints_of_running_max_are_distinct_running_maxima() {
        let seq = up(&[0.2, 0.5, 0.3]);
        let spec = SelectionSpec::for_kind(SelectorKind::RunningMax);
        assert_eq!(breakpoints(&spec, &seq).unwrap(), [0.2, 0.5]);
        // Prefix lengths over the three segments: 1, 2, 3.
        assert_eq!(run(SelectorKind::RunningMax, &seq, fin(0.1)), [1]);
        assert_eq!(run(SelectorKind::RunningMax, &seq, fin(0.2)), [1, 2]);
        assert_eq!(run(SelectorKind::RunningMax, &seq, fin(0.5)), [1, 2, 3]);
    }

    #[test]
    fn empty_sequence_is_rejected_at_construction() {
        assert!(matches!(
            ScoreSequence::<f64>::new(vec![], Direction::Up),
            Err(Error::EmptySequence)
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        const ALL_KINDS: [SelectorKind; 6] = [
            SelectorKind::RunningMax,
            SelectorKind::RunningSum,
            SelectorKind::BelowLambda,
            SelectorKind::AboveLambda,
            SelectorKind::RunningMaxSingle,
            SelectorKind::SmallestSubsetSum,
        ];

        fn arb_case() -> impl Strategy<Value = (SelectorKind, ScoreSequence<f64>)> {
            (0usize..ALL_KINDS.len(), proptest::collection::vec(0.0f64..4.0, 1..9)).prop_map(
                |(ki, scores)| {
                    let kind = ALL_KINDS[ki];
                    let direction = kind.required_direction();
                    let scores = if direction == Direction::Down {
                        scores.into_iter().map(|s| -s).collect()
                    } else {
                        scores
                    };
                    (kind, ScoreSequence::new(scores, direction).unwrap())
                },
            )
        }

        /// Midpoints of breakpoint segments plus probes outside both ends.
        fn segment_probes(bps: &[f64]) -> Vec<Threshold<f64>> {
            let mut probes = vec![Threshold::NegInf, Threshold::PosInf];
            if let (Some(first), Some(last)) = (bps.first(), bps.last()) {
                probes.push(Threshold::Finite(first - 1.0));
                probes.push(Threshold::Finite(last + 1.0));
            }
            for w in bps.windows(2) {
                probes.push(Threshold::Finite(w[0] + (w[1] - w[0]) / 2.0));
            }
            probes.extend(bps.iter().map(|&b| Threshold::Finite(b)));
            probes
        }

        proptest! {
            // Nesting: more conservative thresholds select supersets
            // (subsets for the above-threshold rule, which shrinks).
            #[test]
            fn nesting_in_lambda((kind, seq) in arb_case()) {
                let spec = SelectionSpec::for_kind(kind);
                if kind == SelectorKind::RunningMaxSingle {
                    return Ok(()); // singleton output: nesting does not apply
                }
                let bps = breakpoints(&spec, &seq).unwrap();
                let probes = segment_probes(&bps);
                let mut sorted = probes.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for pair in sorted.windows(2) {
                    let lo: std::collections::HashSet<usize> =
                        select(&spec, &seq, pair[0], None).unwrap().indices.into_iter().collect();
                    let hi: std::collections::HashSet<usize> =
                        select(&spec, &seq, pair[1], None).unwrap().indices.into_iter().collect();
                    if kind == SelectorKind::AboveLambda {
                        prop_assert!(hi.is_subset(&lo));
                    } else if kind != SelectorKind::SmallestSubsetSum {
                        prop_assert!(lo.is_subset(&hi));
                    } else {
                        // Sorted-prefix outputs grow with λ until the cap.
                        prop_assert!(lo.len() <= hi.len());
                    }
                }
            }

            // Output is constant between breakpoints and right-continuous
            // at them.
            #[test]
            fn piecewise_constant_and_right_continuous((kind, seq) in arb_case()) {
                let spec = SelectionSpec::for_kind(kind);
                let bps = breakpoints(&spec, &seq).unwrap();
                for (j, &b) in bps.iter().enumerate() {
                    let at = select(&spec, &seq, Threshold::Finite(b), None).unwrap();
                    // Probe inside [b, next): right-continuity.
                    let eps = match bps.get(j + 1) {
                        Some(&nb) => (nb - b) / 2.0,
                        None => 1.0,
                    };
                    let inside = select(&spec, &seq, Threshold::Finite(b + eps), None).unwrap();
                    prop_assert_eq!(&at.indices, &inside.indices);
                    // The breakpoint is a genuine change point.
                    let probe_below = if j == 0 { b - 1.0 } else { bps[j - 1] + (b - bps[j - 1]) / 2.0 };
                    let below = select(&spec, &seq, Threshold::Finite(probe_below), None).unwrap();
                    prop_assert_ne!(&at.indices, &below.indices);
                }
                // Below the first breakpoint the output matches NegInf.
                let low_probe = bps.first().map_or(0.0, |b| b - 1.0);
                let at_low = select(&spec, &seq, Threshold::Finite(low_probe), None).unwrap();
                let at_neg = select(&spec, &seq, Threshold::NegInf, None).unwrap();
                prop_assert_eq!(at_low.indices, at_neg.indices);
            }

            // A strictly increasing score transform maps breakpoints through
            // the transform (threshold rules) — outputs are unchanged.
            #[test]
            fn monotone_transform_equivariance_threshold_rules(
                (kind, seq) in arb_case().prop_filter("threshold rules only", |(k, _)| {
                    matches!(k, SelectorKind::BelowLambda | SelectorKind::AboveLambda)
                }),
            ) {
                let spec = SelectionSpec::for_kind(kind);
                let g = |s: f64| s + s.powi(3); // strictly increasing
                let mapped = ScoreSequence::new(
                    seq.scores().iter().map(|&s| g(s)).collect(),
                    seq.direction(),
                ).unwrap();
                let bps: Vec<f64> = breakpoints(&spec, &seq).unwrap();
                let mapped_bps = breakpoints(&spec, &mapped).unwrap();
                let expected: Vec<f64> = bps.iter().map(|&b| g(b)).collect();
                prop_assert_eq!(mapped_bps, expected);
                for &b in &bps {
                    let before = select(&spec, &seq, Threshold::Finite(b), None).unwrap();
                    let after = select(&spec, &mapped, Threshold::Finite(g(b)), None).unwrap();
                    prop_assert_eq!(before.indices, after.indices);
                }
            }

            // Scaling scores by a power of two (exact in binary floating
            // point) scales sum-rule breakpoints by the same factor.
            #[test]
            fn power_of_two_scaling_equivariance_sum_rules(
                (kind, seq) in arb_case().prop_filter("sum rules only", |(k, _)| {
                    matches!(k, SelectorKind::RunningSum | SelectorKind::SmallestSubsetSum)
                }),
                exp in -3i32..4,
            ) {
                let spec = SelectionSpec::for_kind(kind);
                let c = (2.0f64).powi(exp);
                let scaled = ScoreSequence::new(
                    seq.scores().iter().map(|&s| c * s).collect(),
                    seq.direction(),
                ).unwrap();
                let bps = breakpoints(&spec, &seq).unwrap();
                let scaled_bps = breakpoints(&spec, &scaled).unwrap();
                let expected: Vec<f64> = bps.iter().map(|&b| c * b).collect();
                prop_assert_eq!(scaled_bps, expected);
            }

            // pulled_count: τ for stopping rules that decide early, the
            // full length otherwise; always covers the largest index.
            #[test]
            fn pulled_count_contract((kind, seq) in arb_case(), x in -1.0f64..6.0) {
                let spec = SelectionSpec::for_kind(kind);
                let lambda = Threshold::Finite(if seq.direction() == Direction::Down { -x } else { x });
                let out = select(&spec, &seq, lambda, None).unwrap();
                if kind.supports_partial_generation() {
                    let accum = kind.accum().unwrap();
                    prop_assert_eq!(out.pulled_count, stopping_time(&seq, lambda, accum).unwrap());
                } else {
                    prop_assert_eq!(out.pulled_count, seq.len());
                }
                if let Some(&max_idx) = out.indices.iter().max() {
                    prop_assert!(out.pulled_count >= max_idx);
                }
            }
        }
    }
}
