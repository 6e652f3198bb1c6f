//! Empirical verification harnesses: γ-sweeps over a calibration/test
//! split, seeded Monte Carlo simulation of the coverage guarantees, and the
//! ensemble subset-selection demo.
//!
//! [`sweep`] is the single-split protocol: calibrate at each target level,
//! apply the threshold to a held-out set, and report average admissibility
//! and output-size/pull-cost metrics per level. A single split can dip
//! below the target — the guarantee is on the expectation over everything,
//! calibration draw included — which is why [`simulate`] resamples both
//! sets many times from a synthetic process and reports rep-averaged
//! coverage with standard errors and the upper-bound jump statistics.
//!
//! [`forest_demo`] specializes the machinery to weighted tree ensembles:
//! select the smallest subset of trees whose accumulated weight crosses the
//! threshold, and require at least `k` correct trees among them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::admissibility::{AdmissibilitySpec, Aggregator, InstanceAdmissibilities};
use crate::calibrate::{calibrate, upper_bound_diag, GenerationRecord};
use crate::selection::{self, ScoreSequence, SelectionSpec, SelectorKind};
use crate::stepfn::{StepFunction, Threshold};
use crate::{count_to_real, Error, Real, Result};

/// One row of a single-split γ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SweepRow<T> {
    /// The target admissibility level.
    pub gamma: T,
    /// The threshold calibrated at this level.
    pub lambda_hat: Threshold<T>,
    /// Average admissibility of the calibrated selection on the test set
    /// (original scale; the abstention value when `lambda_hat` is `∞`).
    pub mean_test_admissibility: T,
    /// Average number of selected elements per test record.
    pub mean_output_size: T,
    /// Average number of elements consumed per test record (the stopping
    /// index for prefix rules, the full length otherwise).
    pub mean_pulled: T,
    /// Calibration set size.
    pub n_cal: usize,
    /// Test set size.
    pub n_test: usize,
}

/// Synthetic data process for Monte Carlo verification: fixed-length score
/// sequences with Gaussian scores and a logistic link from score to the
/// probability that the element is admissible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec<T> {
    /// Elements per generated sequence.
    pub n_elements: usize,
    /// Mean of the Gaussian score distribution.
    pub score_loc: T,
    /// Standard deviation of the score distribution (zero is allowed and
    /// produces a degeneracy warning).
    pub score_scale: T,
    /// Link slope: an element is admissible with probability
    /// `sigmoid(link_a · score + link_b)`.
    pub link_a: T,
    /// Link intercept.
    pub link_b: T,
    /// Value assigned to admissible elements (inadmissible ones get 0).
    pub a_max: T,
    /// Master seed; every repetition derives its own stream from it.
    pub seed: u64,
}

impl<T: Real> ProcessSpec<T> {
    /// Checks the process parameters.
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::InvalidSpec(
                "n_elements must be at least 1".to_string(),
            ));
        }
        for (name, v) in [
            ("score_loc", self.score_loc),
            ("score_scale", self.score_scale),
            ("link_a", self.link_a),
            ("link_b", self.link_b),
            ("a_max", self.a_max),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidSpec(format!("{name} must be finite")));
            }
        }
        if self.score_scale < T::zero() {
            return Err(Error::InvalidSpec(
                "score_scale must be non-negative".to_string(),
            ));
        }
        if self.a_max <= T::zero() {
            return Err(Error::InvalidSpec("a_max must be positive".to_string()));
        }
        Ok(())
    }
}

/// Rep-aggregated coverage statistics for one target level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SimulationRow<T> {
    /// The target admissibility level.
    pub gamma: T,
    /// Rep-average of the calibrated threshold, over the reps where it was
    /// finite; the common infinity when no rep produced a finite one.
    pub lambda_hat: Threshold<T>,
    /// Rep-average of the per-rep mean test admissibility.
    pub mean_test_admissibility: T,
    /// Standard error of that average (sample std over reps / √reps).
    pub se: T,
    /// Rep-average of the per-rep mean output size.
    pub mean_output_size: T,
    /// Rep-average of the per-rep mean pull count.
    pub mean_pulled: T,
    /// Rep-average of the diagnostic jump term `H` (computed on the
    /// calibration set plus one held-out record, per rep).
    pub h_bar: T,
    /// `γ + a_max/(n_cal+1) + h_bar`: the estimated admissibility ceiling.
    pub upper_bound: T,
    /// Fraction of reps whose test mean fell below `γ` — test-sampling
    /// noise, not a guarantee violation, as the guarantee binds the
    /// expectation.
    pub frac_below_gamma: T,
    /// Calibration set size per rep.
    pub n_cal: usize,
    /// Test set size per rep.
    pub n_test: usize,
    /// Number of repetitions aggregated.
    pub reps: usize,
}

/// Simulation rows plus any degeneracy warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct SimulationReport<T> {
    /// One row per target level, sorted by level.
    pub rows: Vec<SimulationRow<T>>,
    /// Non-fatal conditions worth surfacing.
    pub warnings: Vec<String>,
}

/// Tree weights for the ensemble demo: one weight per tree, either shared
/// across records or given per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForestWeights<T> {
    /// One weight per tree, broadcast to every record.
    Shared(Vec<T>),
    /// One weight row per record.
    PerRecord(Vec<Vec<T>>),
}

/// A sweep row plus the majority-vote flag for the ensemble demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct ForestRow<T> {
    /// The underlying sweep statistics.
    #[serde(flatten)]
    pub row: SweepRow<T>,
    /// Whether the mean selected-subset size stays at or below `2k − 1`,
    /// the regime where a k-correct majority is decisive.
    pub majority_meaningful: bool,
}

/// Checks a γ grid: finite, non-negative entries.
fn check_grid<T: Real>(gamma_grid: &[T]) -> Result<()> {
    for &g in gamma_grid {
        if !g.is_finite() || g < T::zero() {
            return Err(Error::InvalidSpec(format!(
                "gamma grid entries must be finite and non-negative, got {g}"
            )));
        }
    }
    Ok(())
}

/// Test-set metrics of one threshold: mean admissibility (original scale),
/// mean output size, mean pull count.
fn eval_split<T: Real>(
    test: &[GenerationRecord<T>],
    test_profiles: &[StepFunction<T>],
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    lambda: Threshold<T>,
) -> Result<(T, T, T)> {
    let n = count_to_real::<T>(test.len());
    let mut adm_sum = T::zero();
    let mut size_sum = 0usize;
    let mut pulled_sum = 0usize;
    for (record, profile) in test.iter().zip(test_profiles) {
        adm_sum = adm_sum + profile.eval(lambda) + adm.a_min_shift;
        let out = selection::select(sel, &record.scores, lambda, record.dedup_keys.as_deref())?;
        size_sum += out.indices.len();
        pulled_sum += out.pulled_count;
    }
    Ok((
        adm_sum / n,
        count_to_real::<T>(size_sum) / n,
        count_to_real::<T>(pulled_sum) / n,
    ))
}

/// Calibrates at every grid level on `cal` and evaluates the resulting
/// threshold on `test`. Rows come back sorted by level.
///
/// The guarantee concerns the expectation over fresh calibration draws; a
/// single split may legitimately dip below its level. Use [`simulate`] for
/// rep-averaged verification.
pub fn sweep<T: Real>(
    cal: &[GenerationRecord<T>],
    test: &[GenerationRecord<T>],
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    gamma_grid: &[T],
) -> Result<Vec<SweepRow<T>>> {
    check_grid(gamma_grid)?;
    if test.is_empty() {
        return Err(Error::EmptyInput("test records"));
    }
    let mut grid = gamma_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));
    let test_profiles: Vec<StepFunction<T>> = test
        .iter()
        .map(|r| r.profile(sel, adm))
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &gamma in &grid {
        let result = calibrate(cal, sel, adm, gamma)?;
        let (mean_adm, mean_size, mean_pulled) =
            eval_split(test, &test_profiles, sel, adm, result.lambda_hat)?;
        rows.push(SweepRow {
            gamma,
            lambda_hat: result.lambda_hat,
            mean_test_admissibility: mean_adm,
            mean_output_size: mean_size,
            mean_pulled,
            n_cal: cal.len(),
            n_test: test.len(),
        });
    }
    Ok(rows)
}

/// Mixer for deriving independent per-rep seed streams from one master
/// seed (splitmix64 finalizer).
fn mix_seed(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one synthetic record: Gaussian scores (absolute values for the
/// sum-accumulated prefix rule, which needs non-negative scores) and
/// Bernoulli-per-element admissibility through the logistic link.
fn draw_record<T: Real>(
    id: String,
    proc_spec: &ProcessSpec<T>,
    sel: &SelectionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<GenerationRecord<T>> {
    let loc = proc_spec.score_loc.to_f64().expect("finite parameter");
    let scale = proc_spec.score_scale.to_f64().expect("finite parameter");
    let a = proc_spec.link_a.to_f64().expect("finite parameter");
    let b = proc_spec.link_b.to_f64().expect("finite parameter");
    let normal = Normal::new(loc, scale)
        .map_err(|e| Error::InvalidSpec(format!("score distribution: {e}")))?;
    let needs_non_negative = sel.kind == SelectorKind::RunningSum
        || sel.kind == SelectorKind::SmallestSubsetSum;
    let mut scores = Vec::with_capacity(proc_spec.n_elements);
    let mut values = Vec::with_capacity(proc_spec.n_elements);
    for _ in 0..proc_spec.n_elements {
        let mut s: f64 = normal.sample(rng);
        if needs_non_negative {
            s = s.abs();
        }
        let p = 1.0 / (1.0 + (-(a * s + b)).exp());
        let admissible = Bernoulli::new(p)
            .map_err(|e| Error::InvalidSpec(format!("link probability: {e}")))?
            .sample(rng);
        scores.push(num_traits::cast::<f64, T>(s).expect("sampled score fits the scalar type"));
        values.push(if admissible { proc_spec.a_max } else { T::zero() });
    }
    GenerationRecord::new(
        id,
        ScoreSequence::new(scores, sel.direction)?,
        InstanceAdmissibilities::new(values, None)?,
        None,
    )
}

/// Per-rep measurements at one grid level.
struct RepStat<T> {
    lambda: Threshold<T>,
    mean_adm: T,
    mean_size: T,
    mean_pulled: T,
    h: T,
}

/// Mean of a slice (empty slices are never produced here).
fn mean_of<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc + x) / count_to_real::<T>(xs.len())
}

/// Repeatedly draws calibration and test sets from the process, calibrates
/// at every grid level, and aggregates coverage statistics across reps.
///
/// Deterministic for a fixed `proc_spec.seed`: repetition `r` uses a
/// dedicated stream derived from the master seed, so results do not depend
/// on scheduling or rep order.
pub fn simulate<T: Real>(
    proc_spec: &ProcessSpec<T>,
    n_cal: usize,
    n_test: usize,
    reps: usize,
    sel: &SelectionSpec,
    adm: &AdmissibilitySpec<T>,
    gamma_grid: &[T],
) -> Result<SimulationReport<T>> {
    proc_spec.validate()?;
    adm.validate()?;
    check_grid(gamma_grid)?;
    if reps == 0 {
        return Err(Error::InvalidSpec("reps must be at least 1".to_string()));
    }
    if n_cal == 0 || n_test == 0 {
        return Err(Error::InvalidSpec(
            "n_cal and n_test must be at least 1".to_string(),
        ));
    }
    let mut grid = gamma_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("grid entries are finite"));

    let mut warnings = Vec::new();
    if proc_spec.score_scale == T::zero() {
        warnings.push(
            "zero-variance scores: every sequence is identical, so breakpoints coincide \
             across records and the upper-bound slack degrades"
                .to_string(),
        );
    }

    let mut per_gamma: Vec<Vec<RepStat<T>>> = grid.iter().map(|_| Vec::new()).collect();
    for rep in 0..reps {
        let rep_seed = mix_seed(proc_spec.seed ^ mix_seed(rep as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
        let cal: Vec<GenerationRecord<T>> = (0..n_cal)
            .map(|i| draw_record(format!("cal-{rep}-{i}"), proc_spec, sel, &mut rng))
            .collect::<Result<_>>()?;
        let test: Vec<GenerationRecord<T>> = (0..n_test)
            .map(|i| draw_record(format!("test-{rep}-{i}"), proc_spec, sel, &mut rng))
            .collect::<Result<_>>()?;
        let test_profiles: Vec<StepFunction<T>> = test
            .iter()
            .map(|r| r.profile(sel, adm))
            .collect::<Result<_>>()?;
        // Diagnostics run on the calibration set plus one held-out record.
        let mut plus_one = cal.clone();
        plus_one.push(test[0].clone());

        for (slot, &gamma) in per_gamma.iter_mut().zip(&grid) {
            let result = calibrate(&cal, sel, adm, gamma)?;
            let (mean_adm, mean_size, mean_pulled) =
                eval_split(&test, &test_profiles, sel, adm, result.lambda_hat)?;
            let diag = upper_bound_diag(&plus_one, sel, adm, gamma)?;
            slot.push(RepStat {
                lambda: result.lambda_hat,
                mean_adm,
                mean_size,
                mean_pulled,
                h: diag.h,
            });
        }
    }

    let rows = grid
        .iter()
        .zip(&per_gamma)
        .map(|(&gamma, stats)| {
            let rep_means: Vec<T> = stats.iter().map(|s| s.mean_adm).collect();
            let mean = mean_of(&rep_means);
            let se = if reps > 1 {
                let var = rep_means
                    .iter()
                    .fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean))
                    / count_to_real::<T>(reps - 1);
                (var / count_to_real::<T>(reps)).sqrt()
            } else {
                T::zero()
            };
            let below = stats.iter().filter(|s| s.mean_adm < gamma).count();
            let finite: Vec<T> = stats.iter().filter_map(|s| s.lambda.finite()).collect();
            let lambda_hat = if finite.is_empty() {
                // No rep found a finite threshold; report the shared
                // endpoint (abstention unless every rep sat at −∞).
                if stats.iter().all(|s| s.lambda == Threshold::NegInf) {
                    Threshold::NegInf
                } else {
                    Threshold::PosInf
                }
            } else {
                Threshold::Finite(mean_of(&finite))
            };
            let h_bar = mean_of(&stats.iter().map(|s| s.h).collect::<Vec<_>>());
            SimulationRow {
                gamma,
                lambda_hat,
                mean_test_admissibility: mean,
                se,
                mean_output_size: mean_of(&stats.iter().map(|s| s.mean_size).collect::<Vec<_>>()),
                mean_pulled: mean_of(&stats.iter().map(|s| s.mean_pulled).collect::<Vec<_>>()),
                h_bar,
                upper_bound: gamma + adm.working_a_max() / count_to_real::<T>(n_cal + 1) + h_bar,
                frac_below_gamma: count_to_real::<T>(below) / count_to_real::<T>(reps),
                n_cal,
                n_test,
                reps,
            }
        })
        .collect();

    Ok(SimulationReport { rows, warnings })
}

/// Turns an ensemble correctness matrix into calibration records: one
/// record per row, scores = tree weights (larger is better), judgments =
/// the binary correctness entries.
pub fn forest_records<T: Real>(
    prediction_correct: &[Vec<u8>],
    weights: &ForestWeights<T>,
) -> Result<Vec<GenerationRecord<T>>> {
    if prediction_correct.is_empty() {
        return Err(Error::EmptyInput("prediction matrix"));
    }
    let n_trees = prediction_correct[0].len();
    for (i, row) in prediction_correct.iter().enumerate() {
        if row.len() != n_trees {
            return Err(Error::LengthMismatch {
                field: "prediction matrix row",
                expected: n_trees,
                found: row.len(),
            });
        }
        if let Some(bad) = row.iter().find(|&&e| e > 1) {
            return Err(Error::InvalidData(format!(
                "prediction matrix entries must be 0 or 1, row {} holds {bad}",
                i + 1
            )));
        }
    }
    let weight_row = |i: usize| -> Result<&[T]> {
        match weights {
            ForestWeights::Shared(w) => Ok(w.as_slice()),
            ForestWeights::PerRecord(rows) => {
                if rows.len() != prediction_correct.len() {
                    return Err(Error::LengthMismatch {
                        field: "weight matrix rows",
                        expected: prediction_correct.len(),
                        found: rows.len(),
                    });
                }
                Ok(rows[i].as_slice())
            }
        }
    };
    prediction_correct
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let w = weight_row(i)?;
            if w.len() != n_trees {
                return Err(Error::LengthMismatch {
                    field: "tree weights",
                    expected: n_trees,
                    found: w.len(),
                });
            }
            if let Some(bad) = w.iter().find(|&&x| !x.is_finite() || x <= T::zero()) {
                return Err(Error::InvalidData(format!(
                    "tree weights must be positive and finite, got {bad}"
                )));
            }
            GenerationRecord::new(
                format!("row-{}", i + 1),
                ScoreSequence::new(w.to_vec(), selection::Direction::Up)?,
                InstanceAdmissibilities::new(
                    row.iter().map(|&e| count_to_real::<T>(e as usize)).collect(),
                    None,
                )?,
                None,
            )
        })
        .collect()
}

/// The ensemble subset-selection demo: smallest-subset-sum selection over
/// tree weights, requiring at least `k` correct trees among the selected.
///
/// Sweeps the grid with the calibration rows and evaluates on the test
/// rows; each output row also flags whether the mean selected-subset size
/// stays at or below `2k − 1` — the regime where `k` correct trees are an
/// outright majority of the subset.
pub fn forest_demo<T: Real>(
    cal: &[GenerationRecord<T>],
    test: &[GenerationRecord<T>],
    k: usize,
    gamma_grid: &[T],
) -> Result<Vec<ForestRow<T>>> {
    let n_trees = cal
        .first()
        .or_else(|| test.first())
        .map(|r| r.scores.len())
        .unwrap_or(0);
    if k == 0 || k > n_trees {
        return Err(Error::InvalidSpec(format!(
            "k must lie in [1, {n_trees}], got {k}"
        )));
    }
    let sel = SelectionSpec::for_kind(SelectorKind::SmallestSubsetSum);
    let adm = AdmissibilitySpec::new(Aggregator::CountAtLeast { k }, T::one())?;
    let majority_cap = count_to_real::<T>(2 * k - 1);
    Ok(sweep(cal, test, &sel, &adm, gamma_grid)?
        .into_iter()
        .map(|row| ForestRow {
            majority_meaningful: row.mean_output_size <= majority_cap,
            row,
        })
        .collect())
}
