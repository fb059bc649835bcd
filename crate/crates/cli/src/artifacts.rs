//! Artifact writers. Every output embeds the resolved scenario and the
//! schema version, and all floating-point values are printed with 17
//! significant digits so that round-tripping is lossless and runs are
//! byte-for-byte comparable.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use mmflow_core::error::{FlowError, Result};
use mmflow_core::metric::Trajectory;

use crate::scenario::{Scenario, SCHEMA_VERSION};

/// 17-significant-digit scientific formatting, the shortest form that
/// round-trips every finite `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> FlowError {
    FlowError::Input(format!("cannot write {}: {e}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn preamble(scenario: &Scenario) -> String {
    let resolved = serde_json::to_string(scenario).expect("scenario serializes");
    format!("# schema_version: {SCHEMA_VERSION}\n# scenario: {resolved}\n")
}

/// Writes a trajectory as CSV: two comment lines (schema version, resolved
/// scenario), the header, then one row per node with every value in
/// 17-significant-digit scientific notation.
pub fn write_trajectory_csv<S>(
    path: &Path,
    scenario: &Scenario,
    traj: &Trajectory<S>,
    state_columns: &[String],
    state_row: impl Fn(&S) -> Vec<f64>,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&preamble(scenario));
    out.push_str("t,energy,envelope,slope,speed,edi_residual");
    for c in state_columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for i in 0..traj.len() {
        // edi_residuals live on intervals; node i carries the residual of
        // the interval ending at i (zero at the initial node).
        let edi = if i == 0 {
            0.0
        } else {
            traj.edi_residuals.get(i - 1).copied().unwrap_or(0.0)
        };
        let mut row = vec![
            fmt17(traj.times[i]),
            fmt17(traj.energies[i]),
            fmt17(traj.envelope[i]),
            fmt17(traj.slopes[i]),
            fmt17(traj.speeds[i]),
            fmt17(edi),
        ];
        for v in state_row(&traj.states[i]) {
            row.push(fmt17(v));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Writes a generic CSV table with the standard preamble.
pub fn write_table_csv(
    path: &Path,
    scenario: &Scenario,
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut out = String::new();
    out.push_str(&preamble(scenario));
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt17(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Wraps a JSON payload with the schema version and the resolved scenario
/// and writes it pretty-printed. `serde_json` maps are ordered, so output
/// bytes are deterministic.
pub fn write_json(path: &Path, scenario: &Scenario, payload: Value) -> Result<()> {
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": serde_json::to_value(scenario).expect("scenario serializes"),
        "result": payload,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("json serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}

/// JSON value carrying an `f64` with full precision (JSON numbers already
/// round-trip `f64`, but NaN/inf must be encoded as strings).
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}
