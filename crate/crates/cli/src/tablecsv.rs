//! Stratified-table CSV parsing for the `toy` subcommand.
//!
//! Layout: modifier columns (0/1), then `arm`, `died`, `alive`. Arm values
//! may be `-1` / `1` / `+1` or a pair of labels (e.g. drug names), in which
//! case the lexicographically first label maps to `-1`.

use anyhow::{bail, Context, Result};
use itr_core::{Arm, StratifiedTable};
use std::collections::BTreeSet;
use std::path::Path;

pub fn load_table(path: &Path) -> Result<StratifiedTable> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("input error: reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let Some(header_line) = lines.next() else {
        bail!("input error: {} is empty", path.display());
    };
    let header: Vec<&str> = header_line.split(',').map(str::trim).collect();
    let required = ["arm", "died", "alive"];
    for name in required {
        if !header.contains(&name) {
            bail!("schema error: missing column `{name}` in {}", path.display());
        }
    }
    let arm_col = header.iter().position(|h| *h == "arm").unwrap();
    let died_col = header.iter().position(|h| *h == "died").unwrap();
    let alive_col = header.iter().position(|h| *h == "alive").unwrap();
    let modifier_cols: Vec<usize> = (0..header.len())
        .filter(|i| ![arm_col, died_col, alive_col].contains(i))
        .collect();
    if modifier_cols.is_empty() {
        bail!("schema error: table needs at least one modifier column");
    }
    let modifiers: Vec<String> = modifier_cols.iter().map(|&i| header[i].to_string()).collect();

    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').map(str::trim).collect()).collect();
    if rows.is_empty() {
        bail!("input error: {} contains no data rows", path.display());
    }

    // determine arm labels: numeric coding or two distinct strings
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for row in &rows {
        if row.len() != header.len() {
            bail!("value error: ragged row in {}", path.display());
        }
        labels.insert(row[arm_col]);
    }
    let numeric = labels.iter().all(|l| matches!(*l, "-1" | "1" | "+1"));
    let arm_of = |raw: &str| -> Result<Arm> {
        if numeric {
            return Ok(match raw {
                "-1" => Arm::Neg,
                _ => Arm::Pos,
            });
        }
        let mut iter = labels.iter();
        let first = *iter.next().unwrap();
        Ok(if raw == first { Arm::Neg } else { Arm::Pos })
    };
    let (neg_label, pos_label) = if numeric {
        ("-1".to_string(), "+1".to_string())
    } else {
        if labels.len() != 2 {
            bail!(
                "value error: arm column must carry exactly two labels, found {:?}",
                labels
            );
        }
        let mut iter = labels.iter();
        (iter.next().unwrap().to_string(), iter.next().unwrap().to_string())
    };

    let mut table = StratifiedTable::new(modifiers, neg_label, pos_label);
    for (row_number, row) in rows.iter().enumerate() {
        let row_id = row_number + 1;
        let mut stratum = Vec::with_capacity(modifier_cols.len());
        for &col in &modifier_cols {
            match row[col] {
                "0" => stratum.push(false),
                "1" => stratum.push(true),
                other => bail!(
                    "value error: row {row_id}: modifier value `{other}` must be 0 or 1"
                ),
            }
        }
        let parse_count = |field: &str, name: &str| -> Result<u64> {
            field.parse::<u64>().with_context(|| {
                format!("value error: row {row_id}: `{name}` value `{field}` is not a count")
            })
        };
        let died = parse_count(row[died_col], "died")?;
        let alive = parse_count(row[alive_col], "alive")?;
        table
            .add_cell(&stratum, arm_of(row[arm_col])?, died, alive)
            .map_err(|e| anyhow::anyhow!("row {row_id}: {e}"))?;
    }
    Ok(table)
}
