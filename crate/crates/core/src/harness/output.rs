//! CSV and JSON emission of sweep and invariant reports.

use serde::Serialize;
use std::io::Write;

use super::config::RunConfig;
use super::invariants::InvariantReport;
use super::sweep::ComparisonReport;

/// Shortest round-trip scientific form; empty for absent values.
pub fn number(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

fn flag(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// One row per grid point with the fixed density-sweep columns.
pub fn write_sweep_csv<W: Write>(report: &ComparisonReport, out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["lambda".to_string(), "rho_formula".into(), "rho_formula_unc".into()];
    header.extend(report.n_schedule.iter().map(|n| format!("rho_stab_{n}")));
    header.extend(
        ["rho_resolvent", "rho_resolvent_unc", "delta_oracle_rel", "trend_flag", "status"].map(String::from),
    );
    w.write_record(&header).map_err(csv_error)?;
    for row in &report.rows {
        let mut rec = vec![number(Some(row.lambda)), number(row.rho_formula), number(row.rho_formula_unc)];
        for cell in &row.rho_stabilized {
            rec.push(match cell.value {
                Some(v) => number(Some(v)),
                None => cell.status.clone(),
            });
        }
        rec.extend([
            number(row.rho_resolvent),
            number(row.rho_resolvent_unc),
            number(row.delta_oracle_rel),
            flag(row.trend_flag),
            row.status.clone(),
        ]);
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()
}

pub fn write_invariants_csv<W: Write>(report: &InvariantReport, out: W) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["name", "lambda", "value", "tolerance", "passed", "detail"]).map_err(csv_error)?;
    for e in &report.entries {
        w.write_record([
            e.name.clone(),
            number(e.lambda),
            number(Some(e.value)),
            number(Some(e.tolerance)),
            e.passed.to_string(),
            e.detail.clone(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_at_unix: Option<u64>,
    config: &'a RunConfig,
    report: &'a T,
}

/// Pretty JSON holding the configuration and the report, with an optional
/// generation time in seconds since the Unix epoch.
pub fn to_json<T: Serialize>(config: &RunConfig, report: &T, generated_at_unix: Option<u64>) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { generated_at_unix, config, report })
        .expect("reports contain only finite or null numbers and string keys");
    s.push('\n');
    s
}

/// Pretty JSON of a checked configuration with all defaults filled in.
pub fn config_json(config: &RunConfig) -> String {
    let mut s = serde_json::to_string_pretty(config).expect("configurations serialize to JSON");
    s.push('\n');
    s
}
