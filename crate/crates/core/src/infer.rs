//! Applying a calibrated threshold to new inputs.
//!
//! [`apply`] runs the selection rule over a fully materialized record —
//! every element already exists, so the reported pull count is the full
//! sequence length. [`stream_apply`] is the partial-generation path: it
//! pulls elements from an [`ElementSource`] one at a time and stops the
//! moment the accumulated score crosses the threshold, so the elements
//! after the stopping index are never generated at all. Only the
//! stopping-time rules support streaming; the set-valued rules need the
//! whole sequence before they can select anything.
//!
//! The two paths agree: for a streamable rule, `stream_apply` returns
//! exactly the indices `apply` would return on the materialized sequence,
//! with `pulled_count` equal to the stopping index.

use crate::selection::{self, Accum, SelectionOutput, SelectionSpec};
use crate::stepfn::Threshold;
use crate::{calibrate::GenerationRecord, Error, Real, Result};

/// Hard ceiling on stream pulls, guarding against non-terminating sources.
pub const DEFAULT_MAX_PULLS: usize = 1024;

/// One element pulled from a generation stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceElement<T> {
    /// The element's score.
    pub score: T,
    /// Duplicate key, required when the selection spec deduplicates.
    pub dedup_key: Option<String>,
    /// Opaque handle to the generated payload; the engine never looks
    /// inside, it only hands indices back.
    pub payload_ref: Option<String>,
}

impl<T> SourceElement<T> {
    /// An element carrying only a score.
    pub fn from_score(score: T) -> Self {
        Self {
            score,
            dedup_key: None,
            payload_ref: None,
        }
    }
}

/// A pull-based generation stream: each call produces the next element in
/// generation order, or `None` once the generator is exhausted.
pub trait ElementSource<T> {
    /// Generates the next element, or `None` at the end of the stream.
    fn next_element(&mut self) -> Option<SourceElement<T>>;
}

/// An in-memory source, mainly for tests and simulations. Tracks how many
/// elements were actually pulled so callers can verify frugality.
#[derive(Debug, Clone)]
pub struct VecSource<T> {
    elements: Vec<SourceElement<T>>,
    cursor: usize,
}

impl<T: Real> VecSource<T> {
    /// Wraps a prepared element list.
    #[must_use]
    pub fn new(elements: Vec<SourceElement<T>>) -> Self {
        Self { elements, cursor: 0 }
    }

    /// A source over bare scores.
    #[must_use]
    pub fn from_scores(scores: &[T]) -> Self {
        Self::new(scores.iter().map(|&s| SourceElement::from_score(s)).collect())
    }

    /// How many elements have been pulled so far.
    #[must_use]
    pub fn pulled(&self) -> usize {
        self.cursor
    }
}

impl<T: Real> ElementSource<T> for VecSource<T> {
    fn next_element(&mut self) -> Option<SourceElement<T>> {
        let el = self.elements.get(self.cursor).cloned();
        if el.is_some() {
            self.cursor += 1;
        }
        el
    }
}

/// Why a streaming run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamStop {
    /// The accumulated score crossed the threshold at the stopping index.
    Crossed,
    /// The source ran out of elements before any crossing.
    Exhausted,
    /// The pull ceiling was reached before any crossing; the output covers
    /// only the pulled prefix and may differ from the full-sequence result.
    Truncated,
}

/// A streaming selection plus the reason the stream stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamOutput {
    /// The selected indices and the number of elements pulled.
    pub output: SelectionOutput,
    /// What ended the run.
    pub stop: StreamStop,
}

/// Runs the calibrated selection over a complete record.
///
/// Identical to [`selection::select`] in its indices; the pull count is the
/// full sequence length, since batch application consumes an already
/// materialized sequence. Use [`stream_apply`] for the frugal count.
pub fn apply<T: Real>(
    sel: &SelectionSpec,
    lambda_hat: Threshold<T>,
    record: &GenerationRecord<T>,
) -> Result<SelectionOutput> {
    let mut out = selection::select(sel, &record.scores, lambda_hat, record.dedup_keys.as_deref())?;
    out.pulled_count = record.scores.len();
    Ok(out)
}

/// Runs a streamable selection rule over a live source with the default
/// pull ceiling.
pub fn stream_apply<T: Real, S: ElementSource<T>>(
    sel: &SelectionSpec,
    lambda_hat: Threshold<T>,
    source: &mut S,
) -> Result<StreamOutput> {
    stream_apply_capped(sel, lambda_hat, source, DEFAULT_MAX_PULLS)
}

/// [`stream_apply`] with an explicit pull ceiling.
///
/// Pulls until the accumulated score strictly exceeds the threshold, the
/// source exhausts, or `max_pulls` elements have been consumed — whichever
/// comes first. The output indices match the batch result on the pulled
/// prefix; `pulled_count` is the number of pulls.
pub fn stream_apply_capped<T: Real, S: ElementSource<T>>(
    sel: &SelectionSpec,
    lambda_hat: Threshold<T>,
    source: &mut S,
    max_pulls: usize,
) -> Result<StreamOutput> {
    if !sel.kind.supports_partial_generation() {
        return Err(Error::StreamingUnsupported(sel.kind.name()));
    }
    let accum = sel.kind.accum().expect("streamable rules accumulate");
    if max_pulls == 0 {
        return Err(Error::InvalidSpec("max_pulls must be at least 1".to_string()));
    }

    let crossed = |acc: T| match lambda_hat {
        Threshold::NegInf => true,
        Threshold::PosInf => false,
        Threshold::Finite(x) => acc > x,
    };

    let mut acc = T::zero();
    let mut keys: Vec<Option<String>> = Vec::new();
    let mut stop = StreamStop::Exhausted;
    while let Some(el) = source.next_element() {
        let position = keys.len() + 1;
        if !el.score.is_finite() {
            return Err(Error::NonFinite {
                field: "score",
                position,
            });
        }
        if accum == Accum::Sum && el.score < T::zero() {
            return Err(Error::NegativeScore { position });
        }
        acc = match (accum, position) {
            (_, 1) => el.score,
            (Accum::Max, _) => {
                if el.score > acc {
                    el.score
                } else {
                    acc
                }
            }
            (Accum::Sum, _) => acc + el.score,
        };
        keys.push(el.dedup_key);
        if crossed(acc) {
            stop = StreamStop::Crossed;
            break;
        }
        if keys.len() >= max_pulls {
            stop = StreamStop::Truncated;
            break;
        }
    }
    let tau = keys.len();
    if tau == 0 {
        return Err(Error::EmptySequence);
    }

    let mut indices: Vec<usize> = match sel.kind {
        selection::SelectorKind::RunningMaxSingle => vec![tau],
        _ => (1..=tau).collect(),
    };
    if sel.dedup {
        let resolved: Option<Vec<String>> = keys.into_iter().collect();
        let resolved = resolved.ok_or(Error::DedupKeysMissing)?;
        let mut seen = std::collections::HashSet::new();
        indices.retain(|&t| seen.insert(resolved[t - 1].as_str()));
    }
    Ok(StreamOutput {
        output: SelectionOutput {
            indices,
            pulled_count: tau,
        },
        stop,
    })
}
