//! CSV and JSON rendering for experiment rows.
//!
//! The CSV headers are part of the output contract and never change;
//! downstream tooling keys on them. Floats print through Rust's
//! shortest-roundtrip formatting, so every cell parses back to the
//! exact bits that were computed, and failed rows carry literal `NaN`
//! cells.

use std::fmt::Write as _;

use serde::Serialize;

use crate::core::Grid;
use crate::error::{Error, Result};
use crate::harness::{ComparisonRow, RateScanRow};
use crate::pierce::PierceScanRow;

/// Header of [`rate_scan_csv`].
pub const RATE_SCAN_HEADER: &str = "n,d,p,estimate,std_error,normalized,grid_source,seed";
/// Header of [`comparison_csv`].
pub const COMPARISON_HEADER: &str = "n,dual_estimate,extended_estimate,voronoi_estimate";
/// Header of [`pierce_csv`].
pub const PIERCE_HEADER: &str = "n,error,normalized,std_error";

/// Renders rate-scan rows as CSV.
pub fn rate_scan_csv(rows: &[RateScanRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(RATE_SCAN_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n, r.d, r.p, r.estimate, r.std_error, r.normalized, r.grid_source, r.seed
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Renders comparison rows as CSV.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(COMPARISON_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.n, r.dual_estimate, r.extended_estimate, r.voronoi_estimate
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// Renders random-quantization scan rows as CSV.
pub fn pierce_csv(rows: &[PierceScanRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(PIERCE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{}", r.n, r.error_p_root, r.normalized, r.std_error)
            .expect("writing to a String cannot fail");
    }
    out
}

/// Serializes any row list (or report) as pretty JSON with a trailing
/// newline, the `--json` form of every output.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::NumericalFailure(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Renders a grid in the point-list file format (one point per line,
/// whitespace-separated), so an optimized grid can be fed back in via
/// `[grid] kind = file`.
pub fn grid_points_text(grid: &Grid) -> String {
    let mut out = String::new();
    for point in grid.points() {
        let mut first = true;
        for c in point.coords() {
            if !first {
                out.push(' ');
            }
            write!(out, "{c}").expect("writing to a String cannot fail");
            first = false;
        }
        out.push('\n');
    }
    out
}
