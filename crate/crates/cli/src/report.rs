//! Report rendering: the per-horizon comparison table (CSV and aligned
//! text), importance rankings, fold diagnostics, and the run manifest.

use anyhow::{Context, Result};
use itr_core::{Comparison, FoldDiagnostics, SelectionReport};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

/// CSV with the evaluation schema: one row per rule, empty difference fields
/// for the comparator row.
pub fn comparison_csv(comparison: &Comparison, reward_type: &str, horizon: f64) -> String {
    let mut out = String::from(
        "rule,reward_type,horizon_days,value,ci_low,ci_high,diff,diff_ci_low,diff_ci_high\n",
    );
    for row in &comparison.rows {
        let e = &row.estimate;
        let _ = write!(
            out,
            "{},{},{},{:.4},{:.4},{:.4}",
            row.name, reward_type, horizon, e.point, e.ci_low, e.ci_high
        );
        match e.comparator_difference {
            Some(d) => {
                let _ = writeln!(out, ",{:.4},{:.4},{:.4}", d.point, d.ci_low, d.ci_high);
            }
            None => out.push_str(",,,\n"),
        }
    }
    out
}

/// Human-readable aligned table: one row per rule,
/// `value (CI)` and `difference (CI)` columns.
pub fn comparison_text(comparison: &Comparison, reward_type: &str, horizon: f64) -> String {
    let mut out = format!("Expected {reward_type} within {horizon} days under each rule\n\n");
    let mut rows: Vec<[String; 3]> = vec![[
        "rule".to_string(),
        "value (95% CI)".to_string(),
        "difference (95% CI)".to_string(),
    ]];
    for row in &comparison.rows {
        let e = &row.estimate;
        let value = format!("{:.1} ({:.1}, {:.1})", e.point, e.ci_low, e.ci_high);
        let diff = match e.comparator_difference {
            Some(d) => format!("{:.1} ({:.1}, {:.1})", d.point, d.ci_low, d.ci_high),
            None => "-".to_string(),
        };
        rows.push([row.name.clone(), value, diff]);
    }
    let widths: Vec<usize> = (0..3)
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in rows {
        let _ = writeln!(
            out,
            "{:<w0$}  {:<w1$}  {:<w2$}",
            row[0],
            row[1],
            row[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    }
    out
}

/// Per-fold and aggregate importance ranks for every covariate.
pub fn importance_csv(report: &SelectionReport, names: &[String]) -> String {
    let k = report.per_fold_ranks.len();
    let mut out = String::from("covariate,mean_rank,selected");
    for fold in 0..k {
        let _ = write!(out, ",rank_fold_{fold}");
    }
    for fold in 0..k {
        let _ = write!(out, ",importance_fold_{fold}");
    }
    out.push('\n');
    for (j, name) in names.iter().enumerate() {
        let selected = report.selected.contains(name);
        let _ = write!(
            out,
            "{name},{:.2},{}",
            report.mean_ranks[j],
            u8::from(selected)
        );
        for fold in 0..k {
            let _ = write!(out, ",{}", report.per_fold_ranks[fold][j]);
        }
        for fold in 0..k {
            let _ = write!(out, ",{:.6}", report.per_fold_importance[fold][j]);
        }
        out.push('\n');
    }
    out
}

/// Fold-level diagnostics accumulated across horizons and learners.
pub fn diagnostics_csv(rows: &[(f64, FoldDiagnostics)]) -> String {
    let mut out = String::from(
        "horizon_days,learner,fold,fold_value,propensity_min,propensity_max,propensity_oob_coverage,censored_fraction_train,converged\n",
    );
    for (horizon, d) in rows {
        let converged = match d.converged {
            Some(true) => "1",
            Some(false) => "0",
            None => "",
        };
        let _ = writeln!(
            out,
            "{horizon},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{converged}",
            d.learner,
            d.fold,
            d.fold_value,
            d.propensity_min,
            d.propensity_max,
            d.propensity_oob_coverage,
            d.censored_fraction
        );
    }
    out
}

/// Run manifest: everything needed to reproduce the outputs byte-for-byte
/// (config echo, seed, input description, crate version). No timestamps, so
/// reruns are identical.
pub fn manifest(command: &str, seed: u64, config_echo: Value, inputs: Value) -> Value {
    serde_json::json!({
        "tool": "itr",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "format_version": crate::codec::FORMAT_VERSION,
        "command": command,
        "seed": seed,
        "config": config_echo,
        "inputs": inputs,
    })
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
