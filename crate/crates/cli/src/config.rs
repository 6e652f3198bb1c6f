//! Configuration resolution: command-line flags take precedence over the
//! `--config` JSON file, which takes precedence over built-in defaults.
//! The fully resolved configuration is echoed (with its SHA-256 hash) in
//! every output header so runs can be reproduced from their artifacts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use confgen::admissibility::{AdmissibilitySpec, Aggregator};
use confgen::eval::ProcessSpec;
use confgen::selection::{Accum, SelectionSpec, SelectorKind};

/// Seed used when neither flags, config file, nor `CONFGEN_SEED` supply one.
const DEFAULT_SEED: u64 = 17;

/// Flags shared by every subcommand. All optional; unset fields fall back
/// to the config file and then to defaults.
#[derive(Debug, Default, clap::Args)]
pub struct Opts {
    /// Target admissibility level in [0, a_max]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Comma-separated levels for sweep/simulate (overrides --gamma)
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    /// Selection rule: running_max | running_sum | running_max_single |
    /// below_lambda | above_lambda | smallest_subset_sum
    #[arg(long)]
    pub selector: Option<String>,
    /// Accumulator sanity check (max | sum); prefix rules fix their own,
    /// so a mismatch is rejected
    #[arg(long)]
    pub accum: Option<String>,
    /// Admissibility aggregator: max | min | recall | count_at_least
    #[arg(long)]
    pub agg: Option<String>,
    /// Recall fraction in [0, 1] (required with --agg recall)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Count target (required with --agg count_at_least and --forest)
    #[arg(long)]
    pub k: Option<usize>,
    /// Largest attainable admissibility value
    #[arg(long)]
    pub a_max: Option<f64>,
    /// Smallest representable admissibility value (domain floor)
    #[arg(long)]
    pub a_min: Option<f64>,
    /// Admissibility credited to abstention (defaults to a_max)
    #[arg(long)]
    pub abstain: Option<f64>,
    /// Drop repeated elements, first occurrence winning; records must
    /// carry dedup_keys
    #[arg(long, action = clap::ArgAction::SetTrue)]
    pub dedup: bool,
    /// Master seed for simulation (falls back to CONFGEN_SEED, then 17)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulation repetitions
    #[arg(long)]
    pub reps: Option<usize>,
    /// Write output to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file supplying any of the flag values plus the
    /// synthetic-process fields (n_elements, score_loc, score_scale,
    /// link_a, link_b, n_cal, n_test)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// The config-file schema: every field optional, unknown fields rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    selector: Option<String>,
    accum: Option<String>,
    agg: Option<String>,
    beta: Option<f64>,
    k: Option<usize>,
    a_max: Option<f64>,
    a_min: Option<f64>,
    abstain: Option<f64>,
    gamma: Option<f64>,
    gamma_grid: Option<Vec<f64>>,
    seed: Option<u64>,
    dedup: Option<bool>,
    reps: Option<usize>,
    n_elements: Option<usize>,
    score_loc: Option<f64>,
    score_scale: Option<f64>,
    link_a: Option<f64>,
    link_b: Option<f64>,
    n_cal: Option<usize>,
    n_test: Option<usize>,
}

/// The effective configuration, echoed verbatim in output headers and
/// hashed for reproducibility. Field order is fixed, so the serialized form
/// is byte-stable for identical inputs.
#[derive(Debug, Serialize)]
struct EffectiveConfig<'a> {
    selector: &'static str,
    accum: Option<&'static str>,
    agg: &'a str,
    beta: Option<f64>,
    k: Option<usize>,
    a_max: f64,
    a_min: f64,
    abstain: f64,
    gamma: Option<f64>,
    gamma_grid: Option<&'a [f64]>,
    dedup: bool,
    seed: u64,
    reps: usize,
    n_cal: usize,
    n_test: usize,
    n_elements: usize,
    score_loc: f64,
    score_scale: f64,
    link_a: f64,
    link_b: f64,
}

/// Everything a command needs, resolved and validated.
#[derive(Debug)]
pub struct Resolved {
    pub sel: SelectionSpec,
    pub adm: AdmissibilitySpec<f64>,
    pub gamma: Option<f64>,
    pub gamma_grid: Option<Vec<f64>>,
    pub seed: u64,
    pub reps: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
    pub proc_spec: ProcessSpec<f64>,
    /// Canonical JSON of the effective configuration.
    pub echo: String,
    /// SHA-256 of `echo`, hex-encoded.
    pub hash: String,
}

impl Resolved {
    /// The level grid for sweep/simulate: `--gamma-grid` when given, else a
    /// single-point grid from `--gamma`.
    pub fn grid(&self) -> Result<Vec<f64>, String> {
        match (&self.gamma_grid, self.gamma) {
            (Some(grid), _) if !grid.is_empty() => Ok(grid.clone()),
            (None, Some(g)) => Ok(vec![g]),
            _ => Err("this command needs --gamma-grid (or a single --gamma)".to_string()),
        }
    }

    /// The single level for calibrate/diagnose.
    pub fn single_gamma(&self) -> Result<f64, String> {
        self.gamma
            .ok_or_else(|| "this command needs --gamma (flag or config file)".to_string())
    }
}

fn parse_selector(name: &str) -> Result<SelectorKind, String> {
    Ok(match name {
        "running_max" => SelectorKind::RunningMax,
        "running_sum" => SelectorKind::RunningSum,
        "running_max_single" => SelectorKind::RunningMaxSingle,
        "below_lambda" => SelectorKind::BelowLambda,
        "above_lambda" => SelectorKind::AboveLambda,
        "smallest_subset_sum" => SelectorKind::SmallestSubsetSum,
        other => {
            return Err(format!(
                "unknown selector {other:?}; expected one of running_max, running_sum, \
                 running_max_single, below_lambda, above_lambda, smallest_subset_sum"
            ))
        }
    })
}

fn parse_accum(name: &str) -> Result<Accum, String> {
    match name {
        "max" => Ok(Accum::Max),
        "sum" => Ok(Accum::Sum),
        other => Err(format!("unknown accumulator {other:?}; expected max or sum")),
    }
}

fn accum_name(accum: Accum) -> &'static str {
    match accum {
        Accum::Max => "max",
        Accum::Sum => "sum",
    }
}

fn build_aggregator(
    agg: &str,
    beta: Option<f64>,
    k: Option<usize>,
) -> Result<Aggregator<f64>, String> {
    Ok(match agg {
        "max" => Aggregator::Max,
        "min" => Aggregator::Min,
        "recall" => Aggregator::Recall {
            beta: beta.ok_or("--agg recall requires --beta")?,
        },
        "count_at_least" => Aggregator::CountAtLeast {
            k: k.ok_or("--agg count_at_least requires --k")?,
        },
        other => {
            return Err(format!(
                "unknown aggregator {other:?}; expected max, min, recall, or count_at_least"
            ))
        }
    })
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var("CONFGEN_SEED") {
        Ok(raw) => raw
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| format!("CONFGEN_SEED must be an unsigned integer, got {raw:?}")),
        Err(_) => Ok(None),
    }
}

/// Merges flags over the config file over defaults and validates the
/// combination.
pub fn resolve(opts: &Opts) -> Result<Resolved, String> {
    let file = match &opts.config {
        Some(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
            serde_json::from_str::<FileConfig>(&raw)
                .map_err(|e| format!("invalid config file {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let selector_name = opts
        .selector
        .clone()
        .or(file.selector)
        .unwrap_or_else(|| "running_max".to_string());
    let kind = parse_selector(&selector_name)?;

    if let Some(accum_name) = opts.accum.as_deref().or(file.accum.as_deref()) {
        let requested = parse_accum(accum_name)?;
        match kind.accum() {
            Some(inherent) if inherent == requested => {}
            Some(inherent) => {
                return Err(format!(
                    "selector {} accumulates with {}, not {}",
                    kind.name(),
                    self::accum_name(inherent),
                    accum_name
                ))
            }
            None => {
                return Err(format!(
                    "selector {} does not use an accumulator",
                    kind.name()
                ))
            }
        }
    }

    let dedup = opts.dedup || file.dedup.unwrap_or(false);
    let sel = SelectionSpec::for_kind(kind).with_dedup(dedup);

    let agg_name = opts
        .agg
        .clone()
        .or(file.agg)
        .unwrap_or_else(|| "max".to_string());
    let beta = opts.beta.or(file.beta);
    let k = opts.k.or(file.k);
    let aggregator = build_aggregator(&agg_name, beta, k)?;

    let a_max = opts.a_max.or(file.a_max).unwrap_or(1.0);
    let a_min = opts.a_min.or(file.a_min).unwrap_or(0.0);
    let abstain = opts.abstain.or(file.abstain);
    let mut adm = AdmissibilitySpec::new(aggregator, a_max).map_err(|e| e.to_string())?;
    if a_min != 0.0 {
        adm = adm.with_a_min_shift(a_min).map_err(|e| e.to_string())?;
    }
    if let Some(abstain) = abstain {
        adm = adm.with_abstain_value(abstain).map_err(|e| e.to_string())?;
    }

    let gamma = opts.gamma.or(file.gamma);
    let gamma_grid = opts.gamma_grid.clone().or(file.gamma_grid);
    let seed = match opts.seed.or(file.seed) {
        Some(seed) => seed,
        None => env_seed()?.unwrap_or(DEFAULT_SEED),
    };
    let reps = opts.reps.or(file.reps).unwrap_or(100);
    let n_cal = file.n_cal.unwrap_or(100);
    let n_test = file.n_test.unwrap_or(100);

    let proc_spec = ProcessSpec {
        n_elements: file.n_elements.unwrap_or(8),
        score_loc: file.score_loc.unwrap_or(0.0),
        score_scale: file.score_scale.unwrap_or(1.0),
        link_a: file.link_a.unwrap_or(1.0),
        link_b: file.link_b.unwrap_or(0.0),
        a_max,
        seed,
    };

    let effective = EffectiveConfig {
        selector: kind.name(),
        accum: kind.accum().map(accum_name),
        agg: &agg_name,
        beta,
        k,
        a_max,
        a_min,
        abstain: adm.abstain_value,
        gamma,
        gamma_grid: gamma_grid.as_deref(),
        dedup,
        seed,
        reps,
        n_cal,
        n_test,
        n_elements: proc_spec.n_elements,
        score_loc: proc_spec.score_loc,
        score_scale: proc_spec.score_scale,
        link_a: proc_spec.link_a,
        link_b: proc_spec.link_b,
    };
    let echo = serde_json::to_string(&effective).expect("config serializes");
    let hash = format!("{:x}", Sha256::digest(echo.as_bytes()));

    Ok(Resolved {
        sel,
        adm,
        gamma,
        gamma_grid,
        seed,
        reps,
        n_cal,
        n_test,
        k,
        out: opts.out.clone(),
        proc_spec,
        echo,
        hash,
    })
}
