//! End-to-end CLI checks: exit codes, error messages, and a full
//! simulate -> impute -> fit -> evaluate round trip through the file formats.

use std::path::PathBuf;
use std::process::{Command, Output};

fn itr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itr"))
        .args(args)
        .output()
        .expect("spawn itr")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("itr-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn toy_missing_file_exits_nonzero_with_message() {
    let out = itr(&["toy", "definitely-missing.csv"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("definitely-missing.csv"), "{stderr}");
}

#[test]
fn pipeline_rejects_k_one_before_any_computation() {
    let dir = temp_dir("k1");
    let cohort = dir.join("cohort.csv");
    std::fs::write(&cohort, "id,treatment,time,event,x1\na,1,10,1,0.5\nb,-1,20,0,1.5\n").unwrap();
    let config = dir.join("run.json");
    std::fs::write(
        &config,
        serde_json::to_string(&serde_json::json!({
            "input": cohort,
            "k": 1,
            "out_dir": dir.join("out"),
        }))
        .unwrap(),
    )
    .unwrap();
    let out = itr(&["pipeline", "--config", config.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("k must be >= 2"), "{stderr}");
    assert!(!dir.join("out").exists(), "no outputs before validation");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn simulate_lists_builtin_scenarios() {
    let out = itr(&["simulate", "--list"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("planted_threshold"));
    assert!(stdout.contains("survival_exponential"));
}

#[test]
fn simulate_impute_fit_evaluate_round_trip() {
    let dir = temp_dir("flow");
    let cohort = dir.join("cohort.csv");
    let completed = dir.join("completed.csv");
    let rule = dir.join("rule.json");
    let eval = dir.join("eval.csv");

    let out = itr(&[
        "simulate",
        "--builtin",
        "survival_exponential",
        "--n",
        "600",
        "--seed",
        "9",
        "--out",
        cohort.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = itr(&[
        "impute",
        "--input",
        cohort.to_str().unwrap(),
        "--horizon",
        "365",
        "--trees",
        "25",
        "--out",
        completed.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&completed).unwrap();
    assert!(text.starts_with("id,treatment,time,event,reward"));

    let out = itr(&[
        "fit",
        "--input",
        completed.to_str().unwrap(),
        "--learner",
        "rwl",
        "--horizon",
        "365",
        "--trees",
        "30",
        "--lambda",
        "0.1",
        "--out",
        rule.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&rule).unwrap()).unwrap();
    assert_eq!(doc["kind"], "rule");
    assert_eq!(doc["rule"]["type"], "linear");

    let out = itr(&[
        "evaluate",
        "--input",
        cohort.to_str().unwrap(),
        "--rule",
        rule.to_str().unwrap(),
        "--horizon",
        "365",
        "--k",
        "4",
        "--trees",
        "25",
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cross-validated value"), "{stdout}");
    let text = std::fs::read_to_string(&eval).unwrap();
    assert!(text.lines().count() == 2);

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn fit_unknown_learner_fails() {
    let dir = temp_dir("bad-learner");
    let cohort = dir.join("cohort.csv");
    std::fs::write(&cohort, "id,treatment,time,event,x1\na,1,10,1,0.5\nb,-1,20,1,1.5\n").unwrap();
    let out = itr(&[
        "fit",
        "--input",
        cohort.to_str().unwrap(),
        "--learner",
        "boost",
        "--horizon",
        "365",
        "--out",
        dir.join("rule.json").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown learner"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn toy_accepts_custom_table_csv() {
    let dir = temp_dir("toy-custom");
    let table = dir.join("table.csv");
    std::fs::write(
        &table,
        "frail,arm,died,alive\n\
         1,alpha,60,40\n\
         1,beta,10,90\n\
         0,alpha,20,80\n\
         0,beta,50,50\n",
    )
    .unwrap();
    let out = itr(&["toy", table.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // frail patients do better on beta, the rest on alpha
    assert!(stdout.contains("frail=1") && stdout.contains("-> beta"), "{stdout}");
    assert!(stdout.contains("frail=0") && stdout.contains("-> alpha"), "{stdout}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn importance_on_pure_noise_stays_within_fold_spread() {
    let dir = temp_dir("importance-null");
    let cohort = dir.join("cohort.csv");
    let out_csv = dir.join("importance.csv");
    // outcome is pure noise: no covariate should stand out
    let out = itr(&[
        "simulate",
        "--builtin",
        "null_effect",
        "--n",
        "400",
        "--seed",
        "21",
        "--out",
        cohort.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = itr(&[
        "importance",
        "--input",
        cohort.to_str().unwrap(),
        "--horizon",
        "365",
        "--folds",
        "5",
        "--top",
        "1",
        "--trees",
        "60",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let importance_cols: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("importance_fold_"))
        .map(|(i, _)| i)
        .collect();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let scores: Vec<f64> = importance_cols
            .iter()
            .map(|&i| fields[i].parse().unwrap())
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let sd = (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            / (scores.len() as f64 - 1.0))
            .sqrt();
        assert!(
            mean.abs() <= 2.0 * sd.max(1e-9),
            "{}: mean importance {mean} exceeds twice the fold spread {sd}",
            fields[0]
        );
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn importance_is_deterministic_for_a_fixed_seed() {
    let dir = temp_dir("importance-determinism");
    let cohort = dir.join("cohort.csv");
    let out = itr(&[
        "simulate",
        "--builtin",
        "screening_signals",
        "--n",
        "300",
        "--seed",
        "8",
        "--out",
        cohort.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out_csv = dir.join(format!("importance{run}.csv"));
        let out = itr(&[
            "--seed",
            "77",
            "importance",
            "--input",
            cohort.to_str().unwrap(),
            "--horizon",
            "365",
            "--folds",
            "4",
            "--top",
            "2",
            "--trees",
            "40",
            "--out",
            out_csv.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&out_csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn importance_writes_per_fold_and_aggregate_ranks() {
    let dir = temp_dir("importance");
    let cohort = dir.join("cohort.csv");
    let out_csv = dir.join("importance.csv");
    let out = itr(&[
        "simulate",
        "--builtin",
        "screening_signals",
        "--n",
        "400",
        "--seed",
        "4",
        "--out",
        cohort.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let out = itr(&[
        "importance",
        "--input",
        cohort.to_str().unwrap(),
        "--horizon",
        "365",
        "--folds",
        "4",
        "--top",
        "2",
        "--trees",
        "60",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("covariate,mean_rank,selected"));
    assert!(header.contains("rank_fold_3"));
    assert!(header.contains("importance_fold_0"));
    assert_eq!(text.lines().count(), 13, "12 covariates + header");
    let _ = std::fs::remove_dir_all(&dir);
}
