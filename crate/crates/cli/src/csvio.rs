//! Cohort CSV ingestion and writing.
//!
//! Expected layout: a header row with an `id` column, a treatment column
//! (name and label mapping configurable), `time` (float days), `event`
//! (0/1), an optional `reward` column, and numeric covariate columns.
//! Fields are comma-separated without quoting.

use anyhow::{bail, Context, Result};
use itr_core::{Arm, Cohort, Subject};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Column mapping and ingestion policy for cohort CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    pub id: String,
    pub time: String,
    pub event: String,
    pub treatment: TreatmentColumn,
    /// Covariate columns to load, in order; all remaining columns if absent.
    pub covariates: Option<Vec<String>>,
    pub on_invalid: InvalidPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreatmentColumn {
    pub column: String,
    /// Map from cell value (e.g. a drug name) to arm in {-1, +1}.
    pub labels: BTreeMap<String, i8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// Any malformed row fails the whole file (default).
    Reject,
    /// Malformed rows are skipped.
    DropRow,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            treatment: TreatmentColumn::default(),
            covariates: None,
            on_invalid: InvalidPolicy::Reject,
        }
    }
}

impl Default for TreatmentColumn {
    fn default() -> Self {
        let labels = [("-1", -1i8), ("1", 1), ("+1", 1)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        TreatmentColumn {
            column: "treatment".into(),
            labels,
        }
    }
}

impl SchemaConfig {
    pub fn load(path: &Path) -> Result<SchemaConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading schema config {}", path.display()))?;
        let config: SchemaConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing schema config {}", path.display()))?;
        for (label, arm) in &config.treatment.labels {
            if *arm != -1 && *arm != 1 {
                bail!("schema error: treatment label `{label}` maps to {arm}, must be -1 or 1");
            }
        }
        Ok(config)
    }
}

const REWARD_COLUMN: &str = "reward";

fn split_row(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Loads and validates a cohort CSV under the given schema.
pub fn load_cohort(path: &Path, schema: &SchemaConfig) -> Result<Cohort> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("input error: reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header_line) = lines.next() else {
        bail!("input error: {} is empty", path.display());
    };
    let header = split_row(header_line);
    let index_of = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| *h == name)
            .with_context(|| format!("schema error: missing column `{name}` in {}", path.display()))
    };
    let id_col = index_of(&schema.id)?;
    let time_col = index_of(&schema.time)?;
    let event_col = index_of(&schema.event)?;
    let treatment_col = index_of(&schema.treatment.column)?;
    let reward_col = header.iter().position(|h| *h == REWARD_COLUMN);

    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => {
            let reserved = [
                schema.id.as_str(),
                schema.time.as_str(),
                schema.event.as_str(),
                schema.treatment.column.as_str(),
                REWARD_COLUMN,
            ];
            header
                .iter()
                .filter(|h| !reserved.contains(*h))
                .map(|h| h.to_string())
                .collect()
        }
    };
    let covariate_cols: Vec<usize> = covariate_names
        .iter()
        .map(|n| index_of(n))
        .collect::<Result<_>>()?;

    let mut subjects = Vec::new();
    let mut dropped = 0usize;
    'rows: for (row_number, line) in lines.enumerate() {
        let row = row_number + 1; // 1-based data row
        let fields = split_row(line);
        if fields.len() != header.len() {
            match schema.on_invalid {
                InvalidPolicy::Reject => bail!(
                    "value error: row {row}: expected {} fields, found {}",
                    header.len(),
                    fields.len()
                ),
                InvalidPolicy::DropRow => {
                    dropped += 1;
                    continue;
                }
            }
        }
        let treatment_raw = fields[treatment_col];
        let Some(&mapped) = schema.treatment.labels.get(treatment_raw) else {
            bail!(
                "value error: row {row}: treatment value `{treatment_raw}` is not in the label mapping"
            );
        };
        let treatment = Arm::from_i8(mapped)
            .map_err(|e| anyhow::anyhow!("value error: row {row}: {e}"))?;

        let parse_f64 = |field: &str, name: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .with_context(|| format!("value error: row {row}: column `{name}` value `{field}` is not numeric"))
        };
        let time = parse_f64(fields[time_col], &schema.time)?;
        let event = match fields[event_col] {
            "0" => false,
            "1" => true,
            other => bail!("value error: row {row}: event value `{other}` must be 0 or 1"),
        };

        let mut covariates = Vec::with_capacity(covariate_cols.len());
        for (&col, name) in covariate_cols.iter().zip(&covariate_names) {
            let field = fields[col];
            if field.is_empty() {
                match schema.on_invalid {
                    InvalidPolicy::Reject => {
                        bail!("value error: row {row}: missing covariate `{name}`")
                    }
                    InvalidPolicy::DropRow => {
                        dropped += 1;
                        continue 'rows;
                    }
                }
            }
            match field.parse::<f64>() {
                Ok(v) => covariates.push(v),
                Err(_) => match schema.on_invalid {
                    InvalidPolicy::Reject => {
                        bail!("value error: row {row}: covariate `{name}` value `{field}` is not numeric")
                    }
                    InvalidPolicy::DropRow => {
                        dropped += 1;
                        continue 'rows;
                    }
                },
            }
        }

        let mut subject = Subject::new(fields[id_col], covariates, treatment, time, event);
        if let Some(col) = reward_col {
            let field = fields[col];
            if !field.is_empty() {
                subject.reward = Some(parse_f64(field, REWARD_COLUMN)?);
            }
        }
        subjects.push(subject);
    }
    if subjects.is_empty() {
        bail!("input error: {} contains no data rows", path.display());
    }
    if dropped > 0 {
        eprintln!("note: dropped {dropped} malformed rows from {}", path.display());
    }
    Cohort::new(covariate_names, subjects).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Writes a cohort back to CSV. Floats use the shortest round-trip
/// representation so a write/load cycle reproduces the cohort bit-for-bit.
pub fn write_cohort(path: &Path, cohort: &Cohort) -> Result<()> {
    let any_reward = cohort.subjects().iter().any(|s| s.reward.is_some());
    let mut out = String::new();
    out.push_str("id,treatment,time,event");
    if any_reward {
        out.push_str(",reward");
    }
    for name in cohort.schema() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for s in cohort.subjects() {
        out.push_str(&s.id);
        out.push_str(&format!(",{},{},{}", s.treatment.sign() as i8, s.time, u8::from(s.event)));
        if any_reward {
            out.push(',');
            if let Some(r) = s.reward {
                out.push_str(&r.to_string());
            }
        }
        for v in &s.covariates {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    struct TempFile(PathBuf);

    impl Drop for TempFile {
        fn drop(&mut self) {
            let _ = std::fs::remove_file(&self.0);
        }
    }

    impl TempFile {
        fn path(&self) -> &Path {
            &self.0
        }
    }

    fn temp_file(contents: &str) -> TempFile {
        use std::sync::atomic::{AtomicU64, Ordering};
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let path =
            std::env::temp_dir().join(format!("itr-csv-test-{}-{n}.csv", std::process::id()));
        std::fs::write(&path, contents).unwrap();
        TempFile(path)
    }

    fn drug_schema() -> SchemaConfig {
        let mut schema = SchemaConfig::default();
        schema.treatment.column = "drug".into();
        schema.treatment.labels =
            [("furosemide".to_string(), -1i8), ("torsemide".to_string(), 1)]
                .into_iter()
                .collect();
        schema
    }

    #[test]
    fn loads_three_row_file_with_drug_mapping() {
        let file = temp_file(
            "id,drug,time,event,x1\n\
             a,furosemide,100,1,0.5\n\
             b,torsemide,200,0,1.5\n\
             c,furosemide,365,0,-2.0\n",
        );
        let cohort = load_cohort(file.path(), &drug_schema()).unwrap();
        assert_eq!(cohort.len(), 3);
        assert_eq!(cohort.schema(), ["x1".to_string()]);
        assert_eq!(cohort.subjects()[0].treatment, Arm::Neg);
        assert_eq!(cohort.subjects()[1].treatment, Arm::Pos);
        assert_eq!(cohort.subjects()[1].time, 200.0);
        assert!(!cohort.subjects()[1].event);
    }

    #[test]
    fn unmapped_treatment_names_offending_row() {
        let file = temp_file(
            "id,drug,time,event,x1\n\
             a,furosemide,100,1,0.5\n\
             b,bumetanide,200,0,1.5\n",
        );
        let err = load_cohort(file.path(), &drug_schema()).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("row 2"), "{msg}");
        assert!(msg.contains("bumetanide"), "{msg}");
    }

    #[test]
    fn empty_file_is_input_error() {
        let file = temp_file("");
        let err = load_cohort(file.path(), &SchemaConfig::default()).unwrap_err();
        assert!(format!("{err}").contains("input error"), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let file = temp_file("id,time,event,x1\na,1,0,2\n");
        let err = load_cohort(file.path(), &SchemaConfig::default()).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("treatment"), "{msg}");
    }

    #[test]
    fn missing_covariate_rejects_file_by_default_and_drops_when_configured() {
        let contents = "id,treatment,time,event,x1\n\
                        a,1,10,1,0.5\n\
                        b,-1,20,0,\n\
                        c,1,30,1,2.5\n";
        let file = temp_file(contents);
        assert!(load_cohort(file.path(), &SchemaConfig::default()).is_err());

        let dropping = SchemaConfig {
            on_invalid: InvalidPolicy::DropRow,
            ..SchemaConfig::default()
        };
        let cohort = load_cohort(file.path(), &dropping).unwrap();
        assert_eq!(cohort.len(), 2);
    }

    #[test]
    fn regenerated_table_cohort_survives_the_file_format() {
        let cohort = itr_core::generate_from_table(&itr_core::table1(), false, 9);
        let path = std::env::temp_dir().join(format!("itr-table1-{}.csv", std::process::id()));
        write_cohort(&path, &cohort).unwrap();
        let loaded = load_cohort(&path, &SchemaConfig::default()).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(loaded.len(), 19_850);
        let (neg, _) = loaded.arm_counts();
        assert_eq!(neg, 17_000);
        assert_eq!(loaded, cohort);
    }

    #[test]
    fn write_then_load_round_trips_bitwise() {
        let mut subjects = Vec::new();
        for i in 0..20 {
            let x = vec![(i as f64) * 0.1234567890123 - 1.0, f64::from(i % 3)];
            let arm = if i % 2 == 0 { Arm::Pos } else { Arm::Neg };
            let mut s = Subject::new(format!("s{i}"), x, arm, 17.25 + i as f64 / 7.0, i % 4 == 0);
            if i % 5 != 0 {
                s.reward = Some(3.0 + i as f64 * 0.333333333333);
            }
            subjects.push(s);
        }
        let cohort = Cohort::new(vec!["x1".into(), "x2".into()], subjects).unwrap();
        let path = std::env::temp_dir().join(format!("itr-roundtrip-{}.csv", std::process::id()));
        write_cohort(&path, &cohort).unwrap();
        let loaded = load_cohort(&path, &SchemaConfig::default()).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(cohort, loaded);
    }

    #[test]
    fn writer_output_is_plain_csv() {
        let mut s = Subject::new("a", vec![1.5], Arm::Neg, 10.0, true);
        s.reward = Some(10.0);
        let cohort = Cohort::new(vec!["x1".into()], vec![s]).unwrap();
        let path = std::env::temp_dir().join(format!("itr-plain-{}.csv", std::process::id()));
        write_cohort(&path, &cohort).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::remove_file(&path).unwrap();
        assert_eq!(text, "id,treatment,time,event,reward,x1\na,-1,10,1,10,1.5\n");
    }
}
