//! CSV emission with a fixed float format so re-runs are byte-comparable.

use nalgebra::DMatrix;
use std::fmt::Write as _;

/// 17 significant digits — enough to round-trip any f64 exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Build a CSV table from a header and rows of floats.
pub fn table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{}", fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Row-major dump of a matrix with generated column names `prefix_i_j`.
pub fn matrix_table(prefix: &str, m: &DMatrix<f64>) -> String {
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}_{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
