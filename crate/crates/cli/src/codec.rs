//! Versioned JSON documents for fitted models, rules, and scenario specs.
//!
//! Forests serialize their nodes as nested arrays:
//! `[0, feature, threshold, left, right]` for splits,
//! `[1, [class counts...]]` for classification leaves, and
//! `[2, mean, n]` for regression leaves.

use anyhow::{bail, Context, Result};
use itr_core::{
    Arm, Forest, ForestMode, ForestParams, Node, ScenarioSpec, StratumRule, TreatmentRule, Tree,
};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::Path;

pub const FORMAT_VERSION: u64 = 1;

fn check_envelope<'a>(doc: &'a Value, kind: &str) -> Result<&'a Value> {
    let version = doc
        .get("version")
        .and_then(Value::as_u64)
        .context("document has no version field")?;
    if version != FORMAT_VERSION {
        bail!("unsupported document version {version} (expected {FORMAT_VERSION})");
    }
    let found = doc
        .get("kind")
        .and_then(Value::as_str)
        .context("document has no kind field")?;
    if found != kind {
        bail!("expected a `{kind}` document, found `{found}`");
    }
    doc.get(kind)
        .with_context(|| format!("document has no `{kind}` payload"))
}

fn arm_to_json(arm: Arm) -> Value {
    json!(arm.sign() as i8)
}

fn arm_from_json(value: &Value) -> Result<Arm> {
    let v = value.as_i64().context("arm must be -1 or 1")?;
    Arm::from_i8(v as i8).map_err(|e| anyhow::anyhow!("{e}"))
}

// ── forests ─────────────────────────────────────────────────────────────

fn node_to_json(node: &Node) -> Value {
    match node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => json!([0, feature, threshold, left, right]),
        Node::LeafCounts { counts } => json!([1, counts]),
        Node::LeafMean { mean, n } => json!([2, mean, n]),
    }
}

fn node_from_json(value: &Value) -> Result<Node> {
    let arr = value.as_array().context("node must be an array")?;
    let tag = arr
        .first()
        .and_then(Value::as_u64)
        .context("node is missing its tag")?;
    match tag {
        0 => {
            if arr.len() != 5 {
                bail!("split node must have 5 entries");
            }
            Ok(Node::Split {
                feature: arr[1].as_u64().context("split feature")? as u32,
                threshold: arr[2].as_f64().context("split threshold")?,
                left: arr[3].as_u64().context("split left child")? as u32,
                right: arr[4].as_u64().context("split right child")? as u32,
            })
        }
        1 => {
            let counts = arr
                .get(1)
                .and_then(Value::as_array)
                .context("leaf counts")?
                .iter()
                .map(|c| c.as_u64().map(|c| c as u32).context("leaf count"))
                .collect::<Result<Vec<u32>>>()?;
            Ok(Node::LeafCounts { counts })
        }
        2 => {
            if arr.len() != 3 {
                bail!("mean leaf must have 3 entries");
            }
            Ok(Node::LeafMean {
                mean: arr[1].as_f64().context("leaf mean")?,
                n: arr[2].as_u64().context("leaf n")? as u32,
            })
        }
        other => bail!("unknown node tag {other}"),
    }
}

fn forest_payload(forest: &Forest) -> Value {
    let trees: Vec<Value> = forest
        .trees()
        .iter()
        .map(|t| Value::Array(t.nodes().iter().map(node_to_json).collect()))
        .collect();
    json!({
        "mode": match forest.mode() {
            ForestMode::Classification => "classification",
            ForestMode::Regression => "regression",
        },
        "n_features": forest.n_features(),
        "n_classes": forest.n_classes(),
        "seed": forest.seed(),
        "params": params_payload(forest.params()),
        "trees": trees,
    })
}

fn params_payload(params: &ForestParams) -> Value {
    serde_json::to_value(params).expect("forest params serialize")
}

fn forest_from_payload(payload: &Value) -> Result<Forest> {
    let mode = match payload.get("mode").and_then(Value::as_str) {
        Some("classification") => ForestMode::Classification,
        Some("regression") => ForestMode::Regression,
        other => bail!("bad forest mode {other:?}"),
    };
    let n_features = payload
        .get("n_features")
        .and_then(Value::as_u64)
        .context("forest n_features")? as usize;
    let n_classes = payload
        .get("n_classes")
        .and_then(Value::as_u64)
        .context("forest n_classes")? as usize;
    let seed = payload.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let params: ForestParams = payload
        .get("params")
        .map(|p| serde_json::from_value(p.clone()))
        .transpose()
        .context("forest params")?
        .unwrap_or_default();
    let trees = payload
        .get("trees")
        .and_then(Value::as_array)
        .context("forest trees")?
        .iter()
        .map(|tree| {
            let nodes = tree
                .as_array()
                .context("tree must be an array of nodes")?
                .iter()
                .map(node_from_json)
                .collect::<Result<Vec<Node>>>()?;
            Ok(Tree::from_nodes(nodes))
        })
        .collect::<Result<Vec<Tree>>>()?;
    Forest::from_parts(trees, mode, params, seed, n_features, n_classes)
        .map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn forest_to_json(forest: &Forest) -> Value {
    json!({
        "version": FORMAT_VERSION,
        "kind": "forest",
        "forest": forest_payload(forest),
    })
}

pub fn forest_from_json(doc: &Value) -> Result<Forest> {
    forest_from_payload(check_envelope(doc, "forest")?)
}

// ── treatment rules ─────────────────────────────────────────────────────

fn stratum_key(stratum: &[bool]) -> String {
    stratum.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

fn stratum_from_key(key: &str) -> Result<Vec<bool>> {
    key.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => bail!("bad stratum bit `{other}`"),
        })
        .collect()
}

fn rule_payload(rule: &TreatmentRule) -> Value {
    match rule {
        TreatmentRule::Universal(arm) => json!({
            "type": "universal",
            "arm": arm_to_json(*arm),
        }),
        TreatmentRule::Linear {
            weights,
            intercept,
            tie_default,
        } => json!({
            "type": "linear",
            "weights": weights,
            "intercept": intercept,
            "tie_default": arm_to_json(*tie_default),
        }),
        TreatmentRule::PairedForest {
            neg,
            pos,
            tie_default,
        } => json!({
            "type": "paired_forest",
            "neg": forest_payload(neg),
            "pos": forest_payload(pos),
            "tie_default": arm_to_json(*tie_default),
        }),
        TreatmentRule::StratumLookup { rule } => {
            let mut assignments = Map::new();
            for (stratum, arm) in rule.assignments() {
                assignments.insert(stratum_key(stratum), arm_to_json(arm));
            }
            json!({
                "type": "stratum_lookup",
                "assignments": Value::Object(assignments),
            })
        }
    }
}

fn rule_from_payload(payload: &Value) -> Result<TreatmentRule> {
    match payload.get("type").and_then(Value::as_str) {
        Some("universal") => Ok(TreatmentRule::Universal(arm_from_json(
            payload.get("arm").context("universal rule arm")?,
        )?)),
        Some("linear") => {
            let weights = payload
                .get("weights")
                .and_then(Value::as_array)
                .context("linear rule weights")?
                .iter()
                .map(|w| w.as_f64().context("linear weight"))
                .collect::<Result<Vec<f64>>>()?;
            Ok(TreatmentRule::Linear {
                weights,
                intercept: payload
                    .get("intercept")
                    .and_then(Value::as_f64)
                    .context("linear rule intercept")?,
                tie_default: arm_from_json(
                    payload.get("tie_default").context("linear tie default")?,
                )?,
            })
        }
        Some("paired_forest") => Ok(TreatmentRule::PairedForest {
            neg: forest_from_payload(payload.get("neg").context("neg forest")?)?,
            pos: forest_from_payload(payload.get("pos").context("pos forest")?)?,
            tie_default: arm_from_json(payload.get("tie_default").context("tie default")?)?,
        }),
        Some("stratum_lookup") => {
            let mut assignment = BTreeMap::new();
            for (key, arm) in payload
                .get("assignments")
                .and_then(Value::as_object)
                .context("stratum assignments")?
            {
                assignment.insert(stratum_from_key(key)?, arm_from_json(arm)?);
            }
            Ok(TreatmentRule::StratumLookup {
                rule: StratumRule::from_assignment(assignment),
            })
        }
        other => bail!("unknown rule type {other:?}"),
    }
}

pub fn rule_to_json(rule: &TreatmentRule) -> Value {
    json!({
        "version": FORMAT_VERSION,
        "kind": "rule",
        "rule": rule_payload(rule),
    })
}

pub fn rule_from_json(doc: &Value) -> Result<TreatmentRule> {
    rule_from_payload(check_envelope(doc, "rule")?)
}

// ── scenarios ───────────────────────────────────────────────────────────

pub fn scenario_to_json(spec: &ScenarioSpec) -> Value {
    json!({
        "version": FORMAT_VERSION,
        "kind": "scenario",
        "scenario": serde_json::to_value(spec).expect("scenario serializes"),
    })
}

pub fn scenario_from_json(doc: &Value) -> Result<ScenarioSpec> {
    let payload = check_envelope(doc, "scenario")?;
    serde_json::from_value(payload.clone()).context("parsing scenario payload")
}

// ── file helpers ────────────────────────────────────────────────────────

pub fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
