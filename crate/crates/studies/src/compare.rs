//! Reference table values with per-cell tolerances, and the check of a case
//! study result against them.

use npp_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::cases::{CaseStudyResult, Study};

pub const REFERENCE_VALUES: &str = include_str!("../resources/reference_values.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceCell {
    pub study: Study,
    /// Site for the pH study; empty otherwise.
    pub group: String,
    pub method: String,
    pub cell: String,
    pub value: f64,
    /// Largest accepted absolute difference.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValues {
    pub version: u32,
    pub cells: Vec<ReferenceCell>,
}

impl ReferenceValues {
    pub fn embedded() -> Self {
        Self::from_json(REFERENCE_VALUES).expect("embedded reference values are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("reference values: {e}")))
    }

    pub fn for_study(&self, study: Study) -> impl Iterator<Item = &ReferenceCell> {
        self.cells.iter().filter(move |c| c.study == study)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCheck {
    pub group: String,
    pub method: String,
    pub cell: String,
    pub expected: f64,
    /// `None` when the result has no such cell.
    pub computed: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl CellCheck {
    pub fn difference(&self) -> Option<f64> {
        self.computed.map(|c| c - self.expected)
    }
}

/// Compare every reference cell of the result's study against the main rows.
pub fn check(result: &CaseStudyResult, reference: &ReferenceValues) -> Vec<CellCheck> {
    reference
        .for_study(result.study)
        .map(|r| {
            let computed = result.row(&r.group, &r.method).and_then(|row| row.cell(&r.cell));
            let pass = computed.is_some_and(|c| (c - r.value).abs() <= r.tolerance);
            CellCheck {
                group: r.group.clone(),
                method: r.method.clone(),
                cell: r.cell.clone(),
                expected: r.value,
                computed,
                tolerance: r.tolerance,
                pass,
            }
        })
        .collect()
}

/// Same comparison against the sensitivity rows (vaccine prior alternative).
pub fn check_sensitivity(result: &CaseStudyResult, reference: &ReferenceValues) -> Vec<CellCheck> {
    let swapped = CaseStudyResult {
        study: result.study,
        settings: result.settings.clone(),
        rows: result.sensitivity.clone(),
        sensitivity: Vec::new(),
    };
    check(&swapped, reference)
        .into_iter()
        .filter(|c| swapped.rows.iter().any(|r| r.method == c.method && r.group == c.group))
        .collect()
}

pub fn checks_table(checks: &[CellCheck]) -> crate::table::Table {
    let mut t =
        crate::table::Table::new(&["group", "method", "cell", "expected", "computed", "tolerance", "pass"]);
    for c in checks {
        t.push(vec![
            c.group.as_str().into(),
            c.method.as_str().into(),
            c.cell.as_str().into(),
            c.expected.into(),
            c.computed.map_or_else(|| "".into(), Into::into),
            c.tolerance.into(),
            if c.pass { "pass" } else { "fail" }.into(),
        ]);
    }
    t
}
