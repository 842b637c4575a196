//! Number formatting and small text-artifact helpers.

use std::fs;
use std::path::Path;

use crate::error::Result;

/// Twelve significant digits in scientific notation.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

/// Comma-separated table with a header line; every row ends in a newline.
pub fn csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| fmt12(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// gnuplot script plotting columns `2..` of `data` against column 1.
pub fn gnuplot_script(data: &str, title: &str, header: &[&str], logscale: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set title '{title}'\n"));
    s.push_str(&format!("set xlabel '{}'\n", header[0]));
    if !logscale.is_empty() {
        s.push_str(&format!("set logscale {logscale}\n"));
    }
    let plots: Vec<String> = (2..=header.len())
        .map(|c| format!("'{data}' using 1:{c} with linespoints"))
        .collect();
    s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    s
}

pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), body)?;
    Ok(())
}
