//! The five workflows behind the subcommands. Every command resolves its
//! configuration first, echoes it (header lines for CSV, fields for JSON,
//! stderr for JSONL apply output), and maps library errors to exit code 2.

use std::process::ExitCode;

use confgen::calibrate::{calibrate, upper_bound_diag};
use confgen::eval::{forest_demo, simulate, sweep};
use confgen::selection;
use confgen::stepfn::Threshold;

use crate::config::{self, Resolved};
use crate::io;
use crate::Command;

/// Serializes a result struct and grafts the effective config and its hash
/// into the object.
fn json_with_config<T: serde::Serialize>(result: &T, resolved: &Resolved) -> String {
    let mut value = serde_json::to_value(result).expect("result serializes");
    let obj = value.as_object_mut().expect("result is an object");
    obj.insert(
        "config".to_string(),
        serde_json::from_str(&resolved.echo).expect("echo is valid JSON"),
    );
    obj.insert(
        "config_hash".to_string(),
        serde_json::Value::String(resolved.hash.clone()),
    );
    let mut doc = serde_json::to_string_pretty(&value).expect("value serializes");
    doc.push('\n');
    doc
}

fn csv_headers(resolved: &Resolved, with_seed: bool) -> Vec<String> {
    let mut headers = vec![
        format!("config: {}", resolved.echo),
        format!("config_hash: {}", resolved.hash),
    ];
    if with_seed {
        headers.push(format!("seed: {}", resolved.seed));
    }
    headers
}

pub fn run(cmd: Command) -> Result<ExitCode, String> {
    match cmd {
        Command::Calibrate { records, opts } => {
            let resolved = config::resolve(&opts)?;
            let gamma = resolved.single_gamma()?;
            let records = io::read_records(&records)?;
            let result = calibrate(&records, &resolved.sel, &resolved.adm, gamma)
                .map_err(|e| e.to_string())?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            io::emit(&resolved.out, &json_with_config(&result, &resolved))?;
            Ok(if result.lambda_hat == Threshold::PosInf {
                // Valid output, but the guarantee is carried by abstention.
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            })
        }

        Command::Apply {
            records,
            lambda,
            opts,
        } => {
            let resolved = config::resolve(&opts)?;
            let lambda: Threshold<f64> = lambda
                .parse()
                .map_err(|e| format!("invalid threshold {lambda:?}: {e}"))?;
            let records = io::read_records(&records)?;
            // The stdout contract is one JSON line per record, so the
            // config echo goes to stderr.
            eprintln!("config: {} (sha256 {})", resolved.echo, resolved.hash);
            let mut lines = String::new();
            for r in &records {
                let out =
                    selection::select(&resolved.sel, &r.scores, lambda, r.dedup_keys.as_deref())
                        .map_err(|e| format!("record {:?}: {e}", r.id))?;
                let line = serde_json::json!({
                    "id": r.id,
                    "indices": out.indices,
                    "pulled": out.pulled_count,
                });
                lines.push_str(&serde_json::to_string(&line).expect("line serializes"));
                lines.push('\n');
            }
            io::emit(&resolved.out, &lines)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Sweep {
            cal,
            test,
            forest,
            opts,
        } => {
            let resolved = config::resolve(&opts)?;
            let grid = resolved.grid()?;
            let headers = csv_headers(&resolved, false);
            let doc = if forest {
                let cal = io::read_matrix(&cal)?;
                let test = io::read_matrix(&test)?;
                let k = resolved
                    .k
                    .ok_or("sweep --forest requires --k (or k in the config file)")?;
                let rows = forest_demo(&cal, &test, k, &grid).map_err(|e| e.to_string())?;
                io::csv_document(
                    &headers,
                    &[
                        "gamma",
                        "lambda_hat",
                        "mean_test_admissibility",
                        "mean_output_size",
                        "mean_pulled",
                        "n_cal",
                        "n_test",
                        "majority_meaningful",
                    ],
                    rows.iter()
                        .map(|r| {
                            vec![
                                r.row.gamma.to_string(),
                                r.row.lambda_hat.to_string(),
                                r.row.mean_test_admissibility.to_string(),
                                r.row.mean_output_size.to_string(),
                                r.row.mean_pulled.to_string(),
                                r.row.n_cal.to_string(),
                                r.row.n_test.to_string(),
                                r.majority_meaningful.to_string(),
                            ]
                        })
                        .collect(),
                )
            } else {
                let cal = io::read_records(&cal)?;
                let test = io::read_records(&test)?;
                let rows = sweep(&cal, &test, &resolved.sel, &resolved.adm, &grid)
                    .map_err(|e| e.to_string())?;
                io::csv_document(
                    &headers,
                    &[
                        "gamma",
                        "lambda_hat",
                        "mean_test_admissibility",
                        "mean_output_size",
                        "mean_pulled",
                        "n_cal",
                        "n_test",
                    ],
                    rows.iter()
                        .map(|r| {
                            vec![
                                r.gamma.to_string(),
                                r.lambda_hat.to_string(),
                                r.mean_test_admissibility.to_string(),
                                r.mean_output_size.to_string(),
                                r.mean_pulled.to_string(),
                                r.n_cal.to_string(),
                                r.n_test.to_string(),
                            ]
                        })
                        .collect(),
                )
            };
            io::emit(&resolved.out, &doc)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Simulate { opts } => {
            let resolved = config::resolve(&opts)?;
            let grid = resolved.grid()?;
            let report = simulate(
                &resolved.proc_spec,
                resolved.n_cal,
                resolved.n_test,
                resolved.reps,
                &resolved.sel,
                &resolved.adm,
                &grid,
            )
            .map_err(|e| e.to_string())?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let doc = io::csv_document(
                &csv_headers(&resolved, true),
                &[
                    "gamma",
                    "lambda_hat",
                    "mean_test_admissibility",
                    "se",
                    "mean_output_size",
                    "mean_pulled",
                    "h_bar",
                    "upper_bound",
                    "frac_below_gamma",
                    "n_cal",
                    "n_test",
                    "reps",
                ],
                report
                    .rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.gamma.to_string(),
                            r.lambda_hat.to_string(),
                            r.mean_test_admissibility.to_string(),
                            r.se.to_string(),
                            r.mean_output_size.to_string(),
                            r.mean_pulled.to_string(),
                            r.h_bar.to_string(),
                            r.upper_bound.to_string(),
                            r.frac_below_gamma.to_string(),
                            r.n_cal.to_string(),
                            r.n_test.to_string(),
                            r.reps.to_string(),
                        ]
                    })
                    .collect(),
            );
            io::emit(&resolved.out, &doc)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Diagnose { records, opts } => {
            let resolved = config::resolve(&opts)?;
            let gamma = resolved.single_gamma()?;
            let records = io::read_records(&records)?;
            let diag = upper_bound_diag(&records, &resolved.sel, &resolved.adm, gamma)
                .map_err(|e| e.to_string())?;
            for w in &diag.warnings {
                eprintln!("warning: {w}");
            }
            io::emit(&resolved.out, &json_with_config(&diag, &resolved))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
