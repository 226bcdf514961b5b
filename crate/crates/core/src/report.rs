//! CSV and plain-text renderings of results and comparisons.
//!
//! Output depends only on the input value, so identical inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use crate::experiment::{Comparison, ExperimentResult};
use crate::schedule::TimeOfDay;

pub const RESULT_CSV_HEADER: &str = "name,consumed_mah,share";
pub const COMPARISON_CSV_HEADER: &str = "config,device,capacity_mah,consumed_mah,remaining_pct";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "text" => Ok(ReportFormat::Text),
            other => Err(format!("unknown report format `{other}` (expected csv or text)")),
        }
    }
}

/// Breakdown rows, categories first, then sources. A result without a
/// breakdown renders as the header alone.
pub fn result_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(RESULT_CSV_HEADER);
    out.push('\n');
    if let Some(b) = &result.breakdown {
        for c in &b.per_category {
            let _ = writeln!(out, "{},{:.1},{:.2}", c.category.as_str(), c.consumed_mah, c.share);
        }
        for s in &b.per_source {
            let _ = writeln!(out, "{},{:.1},{:.2}", s.name, s.consumed_mah, s.share);
        }
    }
    out
}

fn clock(instant: u64) -> String {
    format!("day {} {}", instant / 1440, TimeOfDay::of_instant(instant))
}

pub fn result_text(result: &ExperimentResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario   {}", result.scenario);
    let _ = writeln!(out, "device     {} ({:.0} mAh)", result.device, result.capacity_mah);
    let _ = writeln!(
        out,
        "window     {} .. {} ({} min)",
        clock(result.start),
        clock(result.start + result.duration_minutes),
        result.duration_minutes
    );
    let _ = writeln!(out, "consumed   {:.3} mAh ({:.2}%)", result.consumed_mah, 100.0 - result.remaining_pct);
    let _ = writeln!(out, "remaining  {:.3} mAh ({:.2}%)", result.remaining_mah, result.remaining_pct);

    if let Some(b) = &result.breakdown {
        out.push_str("\nbreakdown\n");
        for c in &b.per_category {
            let _ = writeln!(
                out,
                "  {:<18} {:>10.3} mAh {:>6.2}%",
                c.category.as_str(),
                c.consumed_mah,
                c.share * 100.0
            );
            for s in b.per_source.iter().filter(|s| s.category == c.category) {
                let _ = writeln!(
                    out,
                    "    {:<16} {:>10.3} mAh {:>6.2}%",
                    s.name,
                    s.consumed_mah,
                    s.share * 100.0
                );
            }
        }
    }

    if !result.events.is_empty() {
        out.push_str("\nevents\n");
        for e in &result.events {
            let _ = writeln!(out, "  {e}");
        }
    }
    out
}

pub fn render_result(result: &ExperimentResult, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => result_csv(result),
        ReportFormat::Text => result_text(result),
    }
}

pub fn comparison_csv(comparison: &Comparison) -> String {
    let mut out = String::from(COMPARISON_CSV_HEADER);
    out.push('\n');
    for r in &comparison.rows {
        let _ = writeln!(
            out,
            "{},{},{:.1},{:.3},{:.2}",
            r.config, r.device, r.capacity_mah, r.consumed_mah, r.remaining_pct
        );
    }
    out
}

pub fn comparison_text(comparison: &Comparison) -> String {
    let mut out = format!(
        "{:<24} {:<16} {:>9} {:>13} {:>11}\n",
        "device", "config", "capacity", "consumed_mah", "remaining_%"
    );
    for r in &comparison.rows {
        let _ = writeln!(
            out,
            "{:<24} {:<16} {:>9.0} {:>13.3} {:>11.2}",
            r.device,
            r.config.to_string(),
            r.capacity_mah,
            r.consumed_mah,
            r.remaining_pct
        );
    }
    out
}

pub fn render_comparison(comparison: &Comparison, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => comparison_csv(comparison),
        ReportFormat::Text => comparison_text(comparison),
    }
}

pub fn emit_report(result: &ExperimentResult, format: ReportFormat, path: impl AsRef<Path>) -> io::Result<()> {
    fs::write(path, render_result(result, format))
}

pub fn emit_comparison(
    comparison: &Comparison,
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> io::Result<()> {
    fs::write(path, render_comparison(comparison, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{compare_levels, run_experiment};
    use crate::scenario::Scenario;

    #[test]
    fn baseline_csv_rows() {
        let r = run_experiment(&Scenario::builtin("dual_core_phone").unwrap()).unwrap();
        let csv = result_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULT_CSV_HEADER);
        assert_eq!(lines[1], "platform,252.0,0.80");
        assert_eq!(lines[2], "application,63.0,0.20");
        assert!(lines.contains(&"cell-standby,84.0,0.27"));
        assert!(lines.contains(&"gmail,21.0,0.07"));
    }

    #[test]
    fn empty_result_is_header_only() {
        let s = Scenario::builtin("dual_core_phone")
            .unwrap()
            .with_duration_hours(0.0)
            .unwrap();
        let r = run_experiment(&s).unwrap();
        assert_eq!(result_csv(&r), format!("{RESULT_CSV_HEADER}\n"));
    }

    #[test]
    fn comparison_columns() {
        let c = compare_levels(&Scenario::builtin("dual_core_phone").unwrap()).unwrap();
        let csv = comparison_csv(&c);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "before,dual_core_phone,1650.0,315.000,80.91");
        assert_eq!(lines[4], "complete-off,dual_core_phone,1650.0,16.500,99.00");
    }

    #[test]
    fn emitted_files_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_experiment(&Scenario::builtin("quad_core_tablet").unwrap()).unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Text] {
            let (a, b) = (dir.path().join("a"), dir.path().join("b"));
            emit_report(&r, format, &a).unwrap();
            emit_report(&r, format, &b).unwrap();
            assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        }
    }
}
