//! Subcommand implementations.

use crate::codec;
use crate::config::RunConfig;
use crate::csvio::{load_cohort, write_cohort, SchemaConfig};
use crate::report;
use crate::tablecsv;
use anyhow::{bail, Context, Result};
use itr_core::{
    compare_to_zero_order, complete_cohort, derive_seed, evaluate_learners, fit_earl,
    fit_propensity, fit_rf_policy, fit_rwl, fit_zero_order, generate_scenario,
    select_top_variables, Arm, CvConfig, FoldDiagnostics, ForestParams, LearnerSpec,
    RistParams, ScenarioSpec, StratifiedTable, TreatmentRule,
};
use serde_json::json;
use std::path::Path;

// ── toy ─────────────────────────────────────────────────────────────────

pub fn cmd_toy(table_ref: &str, tie_default: Arm) -> Result<()> {
    let table = match table_ref {
        "table1" => itr_core::table1(),
        "table3" => itr_core::table3(),
        path => tablecsv::load_table(Path::new(path))?,
    };
    print_toy_report(&table, tie_default)
}

fn stratum_name(table: &StratifiedTable, stratum: &[bool]) -> String {
    table
        .modifiers()
        .iter()
        .zip(stratum)
        .map(|(m, &b)| format!("{m}={}", u8::from(b)))
        .collect::<Vec<_>>()
        .join(",")
}

fn print_toy_report(table: &StratifiedTable, tie_default: Arm) -> Result<()> {
    let risks = table.stratum_risks().map_err(|e| anyhow::anyhow!("{e}"))?;
    let totals = table.stratum_total_risks();
    let neg_label = table.arm_label(Arm::Neg).to_string();
    let pos_label = table.arm_label(Arm::Pos).to_string();

    let name_width = table
        .strata()
        .iter()
        .map(|s| stratum_name(table, s).len())
        .max()
        .unwrap_or(7)
        .max("overall".len());
    println!("Stratified risk by stratum and arm:");
    println!(
        "  {:<name_width$}  {:>12}  {:>12}  {:>12}",
        "stratum", neg_label, pos_label, "total"
    );
    for stratum in table.strata() {
        let r = risks[&stratum];
        println!(
            "  {:<name_width$}  {:>12.2}  {:>12.2}  {:>12.2}",
            stratum_name(table, &stratum),
            r[0],
            r[1],
            totals[&stratum]
        );
    }
    let overall = table.arm_overall_risks();
    println!(
        "  {:<name_width$}  {:>12.2}  {:>12.2}  {:>12.2}",
        "overall",
        overall[0],
        overall[1],
        table.overall_risk()
    );

    let risk_neg = table
        .standardized_risk(&table.universal_rule(Arm::Neg))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let risk_pos = table
        .standardized_risk(&table.universal_rule(Arm::Pos))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let optimal = table
        .stratified_optimal_rule(tie_default)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let risk_tailored = table
        .standardized_risk(&optimal)
        .map_err(|e| anyhow::anyhow!("{e}"))?;

    println!();
    println!("Standardized risk under each rule:");
    let label_width = neg_label.len().max(pos_label.len());
    println!("  everyone {:<label_width$} : {risk_neg:.2}", neg_label);
    println!("  everyone {:<label_width$} : {risk_pos:.2}", pos_label);
    println!("  tailored {:<label_width$} : {risk_tailored:.2}", "rule");
    println!();
    println!("Tailored rule:");
    for (stratum, arm) in optimal.assignments() {
        println!(
            "  {:<name_width$} -> {}",
            stratum_name(table, stratum),
            table.arm_label(arm)
        );
    }
    Ok(())
}

// ── simulate ────────────────────────────────────────────────────────────

pub fn cmd_simulate(
    spec_path: Option<&Path>,
    builtin: Option<&str>,
    n: usize,
    seed: u64,
    out: &Path,
    truth_out: Option<&Path>,
) -> Result<()> {
    let spec: ScenarioSpec = match (spec_path, builtin) {
        (Some(path), None) => codec::scenario_from_json(&codec::read_json(path)?)?,
        (None, Some(name)) => ScenarioSpec::builtin(name).with_context(|| {
            format!(
                "unknown builtin scenario `{name}` (available: {})",
                ScenarioSpec::builtin_names().join(", ")
            )
        })?,
        _ => bail!("argument error: pass exactly one of --spec or --builtin"),
    };
    let (cohort, truth) = generate_scenario(&spec, n, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_cohort(out, &cohort)?;
    println!(
        "wrote {} subjects to {} (censored before horizon: {})",
        cohort.len(),
        out.display(),
        cohort
            .restrict_horizon(spec.horizon)
            .map(|r| r.n_needing_imputation())
            .unwrap_or(0)
    );
    if let Some(path) = truth_out {
        let doc = json!({
            "version": codec::FORMAT_VERSION,
            "kind": "truth",
            "truth": {
                "value_optimal": truth.value_optimal,
                "value_neg": truth.value_neg,
                "value_pos": truth.value_pos,
                "mc_se": truth.mc_se,
            },
        });
        codec::write_json(path, &doc)?;
        println!(
            "oracle values: optimal {:.2}, universal -1 {:.2}, universal +1 {:.2}",
            truth.value_optimal, truth.value_neg, truth.value_pos
        );
    }
    Ok(())
}

// ── impute ──────────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn cmd_impute(
    input: &Path,
    schema: Option<&Path>,
    horizon: f64,
    trees: usize,
    cycles: usize,
    splits: usize,
    min_events: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let schema = load_schema(schema)?;
    let cohort = load_cohort(input, &schema)?;
    let restricted = cohort
        .restrict_horizon(horizon)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let flagged = restricted.n_needing_imputation();
    let params = RistParams {
        n_trees: trees,
        n_imputation_cycles: cycles,
        n_random_splits: splits,
        min_events_per_leaf: min_events,
        horizon,
    };
    let (completed, _) =
        complete_cohort(&restricted, &params, seed).map_err(|e| anyhow::anyhow!("{e}"))?;
    write_cohort(out, &completed)?;
    println!(
        "imputed {flagged} of {} subjects; completed cohort written to {}",
        completed.len(),
        out.display()
    );
    Ok(())
}

// ── fit ─────────────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn cmd_fit(
    input: &Path,
    schema: Option<&Path>,
    learner: &str,
    horizon: f64,
    seed: u64,
    out: &Path,
    forest: &ForestParams,
    learner_config: &itr_core::LearnerConfig,
    clip: f64,
) -> Result<()> {
    let schema = load_schema(schema)?;
    let cohort = load_cohort(input, &schema)?;
    let restricted = cohort
        .restrict_horizon(horizon)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let propensity = fit_propensity(&restricted, forest, clip, derive_seed(seed, "propensity"))
        .map_err(|e| anyhow::anyhow!("propensity: {e}"))?;
    let completed = if restricted.n_needing_imputation() > 0 {
        let params = RistParams::new(horizon);
        let (completed, _) = complete_cohort(&restricted, &params, derive_seed(seed, "impute"))
            .map_err(|e| anyhow::anyhow!("imputation: {e}"))?;
        completed
    } else {
        restricted
    };

    let rule: TreatmentRule = match learner {
        "zero" => {
            let fit = fit_zero_order(&completed, &propensity, true, learner_config.tie_default)
                .map_err(|e| anyhow::anyhow!("zero-order: {e}"))?;
            println!(
                "universal values: -1 -> {:.3}, +1 -> {:.3}",
                fit.value_neg, fit.value_pos
            );
            fit.rule
        }
        "rf" => fit_rf_policy(&completed, forest, learner_config.tie_default, derive_seed(seed, "rf"))
            .map_err(|e| anyhow::anyhow!("rf policy: {e}"))?,
        "rwl" => {
            let fit = fit_rwl(&completed, &propensity, learner_config, derive_seed(seed, "rwl"))
                .map_err(|e| anyhow::anyhow!("rwl: {e}"))?;
            println!(
                "rwl: lambda {:.4}, iterations {}, converged {}",
                fit.lambda, fit.iterations, fit.converged
            );
            if !fit.converged {
                eprintln!("warning: rwl surrogate optimizer did not converge; best iterate kept");
            }
            fit.rule
        }
        "earl" => {
            let fit = fit_earl(&completed, &propensity, learner_config, derive_seed(seed, "earl"))
                .map_err(|e| anyhow::anyhow!("earl: {e}"))?;
            println!(
                "earl: lambda {:.4}, iterations {}, converged {}",
                fit.lambda, fit.iterations, fit.converged
            );
            if !fit.converged {
                eprintln!("warning: earl surrogate optimizer did not converge; best iterate kept");
            }
            fit.rule
        }
        other => bail!("argument error: unknown learner `{other}` (zero, rf, rwl, earl)"),
    };
    codec::write_json(out, &codec::rule_to_json(&rule))?;
    println!("rule written to {}", out.display());
    Ok(())
}

// ── importance ──────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn cmd_importance(
    input: &Path,
    schema: Option<&Path>,
    horizon: Option<f64>,
    folds: usize,
    top: Option<usize>,
    forest: &ForestParams,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let schema = load_schema(schema)?;
    let cohort = load_cohort(input, &schema)?;
    let cohort = match horizon {
        Some(h) => cohort.restrict_horizon(h).map_err(|e| anyhow::anyhow!("{e}"))?,
        None => cohort,
    };
    let m = top.unwrap_or_else(|| cohort.n_covariates().min(10));
    let report = select_top_variables(&cohort, folds, m, forest, seed)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let names = cohort.schema().to_vec();
    report::write_text(out, &report::importance_csv(&report, &names))?;
    println!("selected: {}", report.selected.join(", "));
    println!("importance report written to {}", out.display());
    Ok(())
}

// ── evaluate ────────────────────────────────────────────────────────────

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    input: &Path,
    schema: Option<&Path>,
    rule_path: &Path,
    horizon: f64,
    k: usize,
    seed: u64,
    forest: &ForestParams,
    normalized: bool,
    clip: f64,
    out: Option<&Path>,
) -> Result<()> {
    let schema = load_schema(schema)?;
    let cohort = load_cohort(input, &schema)?;
    let rule = codec::rule_from_json(&codec::read_json(rule_path)?)?;
    let mut cfg = CvConfig::new(horizon, seed);
    cfg.k = k;
    cfg.normalized = normalized;
    cfg.clip = clip;
    cfg.propensity_forest = forest.clone();
    cfg.policy_forest = forest.clone();
    let run = evaluate_learners(
        &cohort,
        &[("fixed".to_string(), LearnerSpec::Fixed(rule))],
        &cfg,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;
    let (_, estimate) = &run.estimates[0];
    println!(
        "cross-validated value: {:.3} (95% CI {:.3}, {:.3}; se {:.3}, k = {})",
        estimate.point, estimate.ci_low, estimate.ci_high, estimate.se, estimate.n_folds
    );
    if let Some(path) = out {
        let mut csv = String::from(
            "rule,reward_type,horizon_days,value,ci_low,ci_high,diff,diff_ci_low,diff_ci_high\n",
        );
        csv.push_str(&format!(
            "fixed,reward,{horizon},{:.4},{:.4},{:.4},,,\n",
            estimate.point, estimate.ci_low, estimate.ci_high
        ));
        report::write_text(path, &csv)?;
        println!("evaluation written to {}", path.display());
    }
    Ok(())
}

// ── pipeline ────────────────────────────────────────────────────────────

pub fn cmd_pipeline(config_path: &Path, seed_override: Option<u64>) -> Result<()> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let schema = config.load_schema()?;
    let cohort = load_cohort(&config.input, &schema)?;
    std::fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;

    // the zero-order comparator always runs; the rest as requested
    let mut learner_names: Vec<String> = Vec::new();
    for learner in &config.learners {
        if learner != "zero" && !learner_names.contains(learner) {
            learner_names.push(learner.clone());
        }
    }

    let mut all_diagnostics: Vec<(f64, FoldDiagnostics)> = Vec::new();
    let mut written: Vec<String> = Vec::new();
    for &horizon in &config.horizons {
        let stage = format!("horizon {horizon}");
        let restricted = cohort
            .restrict_horizon(horizon)
            .map_err(|e| anyhow::anyhow!("{stage}: {e}"))?;

        // variable reduction runs first, before any fitting
        let working = if config.select_variables && cohort.n_covariates() > 1 {
            let m = config.top_m.min(cohort.n_covariates());
            let selection = select_top_variables(
                &restricted,
                config.importance_folds,
                m,
                &config.forest,
                derive_seed(config.seed, &format!("selection-h{horizon}")),
            )
            .map_err(|e| anyhow::anyhow!("{stage} variable selection: {e}"))?;
            let path = config.out_dir.join(format!("importance_h{horizon}.csv"));
            report::write_text(
                &path,
                &report::importance_csv(&selection, cohort.schema()),
            )?;
            written.push(path.display().to_string());
            cohort
                .select_columns(&selection.selected)
                .map_err(|e| anyhow::anyhow!("{stage}: {e}"))?
        } else {
            cohort.clone()
        };

        let mut specs: Vec<(String, LearnerSpec)> =
            vec![("zero".to_string(), LearnerSpec::ZeroOrder)];
        for name in &learner_names {
            let spec = match name.as_str() {
                "rf" => LearnerSpec::RfPolicy,
                "rwl" => LearnerSpec::Rwl,
                "earl" => LearnerSpec::Earl,
                other => bail!("argument error: unknown learner `{other}`"),
            };
            specs.push((name.clone(), spec));
        }

        let run = evaluate_learners(&working, &specs, &config.cv_config(horizon))
            .map_err(|e| anyhow::anyhow!("{stage}: {e}"))?;
        let zero = run
            .estimates
            .iter()
            .find(|(name, _)| name == "zero")
            .map(|(_, e)| e.clone())
            .expect("zero-order always evaluated");
        let others: Vec<(String, itr_core::ValueEstimate)> = run
            .estimates
            .iter()
            .filter(|(name, _)| name != "zero")
            .cloned()
            .collect();
        let comparison =
            compare_to_zero_order(&others, &zero).map_err(|e| anyhow::anyhow!("{stage}: {e}"))?;

        let csv_path = config.out_dir.join(format!("report_h{horizon}.csv"));
        report::write_text(
            &csv_path,
            &report::comparison_csv(&comparison, &config.reward_label, horizon),
        )?;
        written.push(csv_path.display().to_string());
        let text_path = config.out_dir.join(format!("report_h{horizon}.txt"));
        report::write_text(
            &text_path,
            &report::comparison_text(&comparison, &config.reward_label, horizon),
        )?;
        written.push(text_path.display().to_string());

        for d in run.diagnostics {
            if d.propensity_oob_coverage < 1.0 {
                eprintln!(
                    "warning: {stage} fold {}: only {:.1}% of training subjects were ever out-of-bag; consider more propensity trees",
                    d.fold,
                    100.0 * d.propensity_oob_coverage
                );
            }
            all_diagnostics.push((horizon, d));
        }
    }

    let diag_path = config.out_dir.join("diagnostics.csv");
    report::write_text(&diag_path, &report::diagnostics_csv(&all_diagnostics))?;
    written.push(diag_path.display().to_string());

    let manifest = report::manifest(
        "pipeline",
        config.seed,
        serde_json::to_value(&config)?,
        json!({
            "input": config.input.display().to_string(),
            "n_subjects": cohort.len(),
            "n_covariates": cohort.n_covariates(),
        }),
    );
    let manifest_path = config.out_dir.join("manifest.json");
    codec::write_json(&manifest_path, &manifest)?;
    written.push(manifest_path.display().to_string());

    for path in &written {
        println!("wrote {path}");
    }
    Ok(())
}

// ── helpers ─────────────────────────────────────────────────────────────

fn load_schema(path: Option<&Path>) -> Result<SchemaConfig> {
    match path {
        Some(p) => SchemaConfig::load(p),
        None => Ok(SchemaConfig::default()),
    }
}

/// Creates the parent directory of an output path when needed.
pub fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    Ok(())
}
