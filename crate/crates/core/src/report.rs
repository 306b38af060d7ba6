//! Plain-text tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::eval::ComparisonTable;
use crate::fusion::{SweepAxis, SweepTable};
use crate::stats::{ConfidenceInterval, PairwiseMatrix};
use crate::synth::BiasLadder;

fn ci_cell(ci: &Option<ConfidenceInterval>) -> String {
    match ci {
        Some(ci) => format!("{:.4} ({:.4}, {:.4})", ci.estimate, ci.lo, ci.hi),
        None => "-".into(),
    }
}

/// `# | Setup | Val mAP (lo, hi) | Test mAP (lo, hi)`.
pub fn comparison_table(table: &ComparisonTable) -> String {
    let width = table
        .rows
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(5)
        .max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>2}  {:<width$}  {:<26}  {:<26}",
        "#", "Setup", "Val mAP (lo, hi)", "Test mAP (lo, hi)"
    );
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{:>2}  {:<width$}  {:<26}  {:<26}",
            r.index,
            r.name,
            ci_cell(&r.val),
            ci_cell(&r.test)
        );
    }
    trim_lines(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    /// Removed stream, or `None` for the full ensemble.
    pub removed: Option<String>,
    pub map: f64,
}

pub fn holdout_table(rows: &[HoldoutRow], mode: &str) -> String {
    let width = rows
        .iter()
        .filter_map(|r| r.removed.as_ref().map(String::len))
        .max()
        .unwrap_or(4)
        .max("Removed stream".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {} mAP", "Removed stream", mode);
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:.4}",
            r.removed.as_deref().unwrap_or("None"),
            r.map
        );
    }
    trim_lines(out)
}

fn axis_value(axis: SweepAxis, v: f64) -> String {
    match axis {
        SweepAxis::K => format!("{}", v.round() as i64),
        _ => format!("{v:.2}"),
    }
}

/// One row per grid value; the base configuration is marked with `*`.
pub fn sweep_table(table: &SweepTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}  mAP", table.axis.label());
    for r in &table.rows {
        let mark = if r.value == table.base_value {
            " *"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<8}  {:.4}{mark}",
            axis_value(table.axis, r.value),
            r.map
        );
    }
    trim_lines(out)
}

/// Upper-triangle matrix of paired p-values; `*` marks significance at the
/// corrected threshold.
pub fn pairwise_table(m: &PairwiseMatrix) -> String {
    let n = m.models.len();
    let width = m.models.iter().map(String::len).max().unwrap_or(1).max(10);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "");
    for name in &m.models {
        let _ = write!(out, "  {name:>width$}");
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{:<width$}", m.models[i]);
        for j in 0..n {
            let cell = if j <= i {
                String::new()
            } else {
                let p = m.get(i, j).expect("every upper pair is present");
                format!("{:.2e}{}", p.p_value, if p.significant { "*" } else { " " })
            };
            let _ = write!(out, "  {cell:>width$}");
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "* p < {:.2e} (Bonferroni over {} comparisons)",
        m.threshold,
        m.pairs.len()
    );
    trim_lines(out)
}

pub fn ci_table(rows: &[(String, ConfidenceInterval)]) -> String {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  mAP (lo, hi)", "Report");
    for (name, ci) in rows {
        let _ = writeln!(out, "{name:<width$}  {}", ci_cell(&Some(ci.clone())));
    }
    trim_lines(out)
}

pub fn ladder_table(ladder: &BiasLadder) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10}", "sigma_traj");
    for s in &ladder.streams {
        let _ = write!(out, "  {:>10}", s.as_str());
    }
    let _ = writeln!(out, "  {:>10}", "ensemble");
    for r in &ladder.rows {
        let _ = write!(out, "{:<10.2}", r.sigma_traj);
        for s in &ladder.streams {
            let _ = write!(out, "  {:>10.4}", r.single[s]);
        }
        let _ = writeln!(out, "  {:>10.4}", r.ensemble);
    }
    trim_lines(out)
}

fn trim_lines(s: String) -> String {
    let mut out: String = s.lines().map(|l| l.trim_end().to_string() + "\n").collect();
    if out.is_empty() {
        out.push('\n');
    }
    out
}
