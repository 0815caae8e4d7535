//! Contingency-table engine for stratified toy populations.
//!
//! A [`StratifiedTable`] holds death/survival counts per (stratum, arm), where
//! strata are combinations of named binary modifiers. It computes
//! per-stratum risks, the standardized population risk under any stratum
//! rule (prevalence-weighted counterfactual risk), and the
//! stratification-optimal tailored rule. Counts stay in integer arithmetic;
//! division to a risk happens once, in double precision.

use crate::cohort::Arm;
use crate::error::{Error, Result};
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Died/alive counts for one (stratum, arm) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub died: u64,
    pub alive: u64,
}

impl CellCounts {
    pub fn total(&self) -> u64 {
        self.died + self.alive
    }
}

/// A stratum is one combination of the table's binary modifiers.
pub type StratumId = Vec<bool>;

/// Counts by stratum and arm over a population.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedTable {
    modifiers: Vec<String>,
    arm_labels: [String; 2],
    cells: BTreeMap<StratumId, [CellCounts; 2]>,
}

fn arm_slot(arm: Arm) -> usize {
    match arm {
        Arm::Neg => 0,
        Arm::Pos => 1,
    }
}

impl StratifiedTable {
    pub fn new(modifiers: Vec<String>, neg_label: impl Into<String>, pos_label: impl Into<String>) -> Self {
        StratifiedTable {
            modifiers,
            arm_labels: [neg_label.into(), pos_label.into()],
            cells: BTreeMap::new(),
        }
    }

    /// Accumulates counts into a (stratum, arm) cell.
    pub fn add_cell(&mut self, stratum: &[bool], arm: Arm, died: u64, alive: u64) -> Result<()> {
        if stratum.len() != self.modifiers.len() {
            return Err(Error::Argument(format!(
                "stratum has {} modifiers, table has {}",
                stratum.len(),
                self.modifiers.len()
            )));
        }
        let entry = self.cells.entry(stratum.to_vec()).or_default();
        let cell = &mut entry[arm_slot(arm)];
        cell.died += died;
        cell.alive += alive;
        Ok(())
    }

    pub fn modifiers(&self) -> &[String] {
        &self.modifiers
    }

    pub fn arm_label(&self, arm: Arm) -> &str {
        &self.arm_labels[arm_slot(arm)]
    }

    /// Strata in deterministic (lexicographic) order.
    pub fn strata(&self) -> Vec<StratumId> {
        self.cells.keys().cloned().collect()
    }

    pub fn cell(&self, stratum: &[bool], arm: Arm) -> Option<CellCounts> {
        self.cells.get(stratum).map(|c| c[arm_slot(arm)])
    }

    pub fn grand_total(&self) -> u64 {
        self.cells
            .values()
            .map(|c| c[0].total() + c[1].total())
            .sum()
    }

    fn stratum_name(&self, stratum: &[bool]) -> String {
        let parts: Vec<String> = self
            .modifiers
            .iter()
            .zip(stratum)
            .map(|(m, &b)| format!("{m}={}", u8::from(b)))
            .collect();
        parts.join(",")
    }

    /// Validates that every stratum has positive totals in both arms.
    pub fn check_no_degenerate_strata(&self) -> Result<()> {
        for (s, cells) in &self.cells {
            for arm in [Arm::Neg, Arm::Pos] {
                if cells[arm_slot(arm)].total() == 0 {
                    return Err(Error::Degenerate(format!(
                        "stratum {} has no subjects in arm {}",
                        self.stratum_name(s),
                        self.arm_label(arm)
                    )));
                }
            }
        }
        Ok(())
    }

    /// Risk `died / total` per (stratum, arm).
    pub fn stratum_risks(&self) -> Result<BTreeMap<StratumId, [f64; 2]>> {
        self.check_no_degenerate_strata()?;
        Ok(self
            .cells
            .iter()
            .map(|(s, cells)| {
                let risks = [
                    cells[0].died as f64 / cells[0].total() as f64,
                    cells[1].died as f64 / cells[1].total() as f64,
                ];
                (s.clone(), risks)
            })
            .collect())
    }

    /// Risk across both arms within each stratum (the table's total rows).
    pub fn stratum_total_risks(&self) -> BTreeMap<StratumId, f64> {
        self.cells
            .iter()
            .map(|(s, cells)| {
                let died = cells[0].died + cells[1].died;
                let total = cells[0].total() + cells[1].total();
                (s.clone(), died as f64 / total as f64)
            })
            .collect()
    }

    /// Crude overall risk per arm, pooling all strata.
    pub fn arm_overall_risks(&self) -> [f64; 2] {
        let mut died = [0u64; 2];
        let mut total = [0u64; 2];
        for cells in self.cells.values() {
            for a in 0..2 {
                died[a] += cells[a].died;
                total[a] += cells[a].total();
            }
        }
        [
            died[0] as f64 / total[0] as f64,
            died[1] as f64 / total[1] as f64,
        ]
    }

    /// Overall population risk.
    pub fn overall_risk(&self) -> f64 {
        let died: u64 = self.cells.values().map(|c| c[0].died + c[1].died).sum();
        died as f64 / self.grand_total() as f64
    }

    /// Standardized (counterfactual) risk if every subject in each stratum
    /// received the rule's arm: `sum_s (N_s / N) * risk(s, rule(s))` with
    /// stratum prevalence `N_s` taken over both arms.
    pub fn standardized_risk(&self, rule: &StratumRule) -> Result<f64> {
        self.check_no_degenerate_strata()?;
        let n = self.grand_total() as f64;
        let mut acc = 0.0;
        for (s, cells) in &self.cells {
            let arm = rule.arm_for(s).ok_or_else(|| {
                Error::Argument(format!("rule does not cover stratum {}", self.stratum_name(s)))
            })?;
            let cell = cells[arm_slot(arm)];
            let prevalence = (cells[0].total() + cells[1].total()) as f64;
            acc += prevalence * (cell.died as f64 / cell.total() as f64);
        }
        Ok(acc / n)
    }

    /// Per stratum, the arm with strictly lower risk; ties go to `tie_default`.
    pub fn stratified_optimal_rule(&self, tie_default: Arm) -> Result<StratumRule> {
        let risks = self.stratum_risks()?;
        let mut assignment = BTreeMap::new();
        for (s, r) in risks {
            let arm = if r[0] < r[1] {
                Arm::Neg
            } else if r[1] < r[0] {
                Arm::Pos
            } else {
                tie_default
            };
            assignment.insert(s, arm);
        }
        Ok(StratumRule { assignment })
    }

    /// The universal rule assigning one arm everywhere.
    pub fn universal_rule(&self, arm: Arm) -> StratumRule {
        StratumRule {
            assignment: self.cells.keys().map(|s| (s.clone(), arm)).collect(),
        }
    }

    /// Every stratum-rule over this table (`2^S` rules). Errors above 20 strata.
    pub fn all_rules(&self) -> Result<Vec<StratumRule>> {
        let strata = self.strata();
        if strata.len() > 20 {
            return Err(Error::Argument(format!(
                "refusing to enumerate 2^{} rules",
                strata.len()
            )));
        }
        let mut rules = Vec::with_capacity(1 << strata.len());
        for mask in 0u32..(1 << strata.len()) {
            let assignment = strata
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let arm = if mask >> i & 1 == 1 { Arm::Pos } else { Arm::Neg };
                    (s.clone(), arm)
                })
                .collect();
            rules.push(StratumRule { assignment });
        }
        Ok(rules)
    }
}

/// Map from stratum to assigned arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumRule {
    assignment: BTreeMap<StratumId, Arm>,
}

impl StratumRule {
    pub fn from_assignment(assignment: BTreeMap<StratumId, Arm>) -> Self {
        StratumRule { assignment }
    }

    pub fn arm_for(&self, stratum: &[bool]) -> Option<Arm> {
        self.assignment.get(stratum).copied()
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&StratumId, Arm)> {
        self.assignment.iter().map(|(s, &a)| (s, a))
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// The bundled 1-modifier example population: heart-failure patients on
/// furosemide (-1) or torsemide (+1), stratified by reduced ejection fraction.
pub fn table1() -> StratifiedTable {
    let mut t = StratifiedTable::new(
        alloc::vec!["reduced_ef".to_string()],
        "furosemide",
        "torsemide",
    );
    // stratum [true] = reduced ejection fraction
    t.add_cell(&[true], Arm::Neg, 7000, 2000).unwrap();
    t.add_cell(&[true], Arm::Pos, 100, 1000).unwrap();
    t.add_cell(&[false], Arm::Neg, 2000, 6000).unwrap();
    t.add_cell(&[false], Arm::Pos, 1500, 250).unwrap();
    t
}

/// The bundled 3-modifier example population, further stratified by type 2
/// diabetes and chronic kidney disease.
pub fn table3() -> StratifiedTable {
    let mut t = StratifiedTable::new(
        alloc::vec![
            "reduced_ef".to_string(),
            "t2dm".to_string(),
            "ckd".to_string(),
        ],
        "furosemide",
        "torsemide",
    );
    for t2dm in [true, false] {
        // CKD strata share counts regardless of T2DM, as do the no-CKD strata.
        t.add_cell(&[true, t2dm, true], Arm::Neg, 3350, 200).unwrap();
        t.add_cell(&[true, t2dm, true], Arm::Pos, 15, 400).unwrap();
        t.add_cell(&[false, t2dm, true], Arm::Neg, 500, 1500).unwrap();
        t.add_cell(&[false, t2dm, true], Arm::Pos, 375, 63).unwrap();
        t.add_cell(&[true, t2dm, false], Arm::Neg, 150, 800).unwrap();
        t.add_cell(&[true, t2dm, false], Arm::Pos, 35, 100).unwrap();
        t.add_cell(&[false, t2dm, false], Arm::Neg, 500, 1500).unwrap();
        t.add_cell(&[false, t2dm, false], Arm::Pos, 375, 62).unwrap();
    }
    t
}
