//! Byte-stable CSV and JSON writers.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;

/// 17 significant digits in scientific notation.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> io::Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    debug_assert!(columns.iter().all(|c| c.len() == rows));
    let mut text = header.join(",");
    text.push('\n');
    for i in 0..rows {
        for (j, col) in columns.iter().enumerate() {
            if j > 0 {
                text.push(',');
            }
            write!(text, "{}", num(col[i])).expect("string write");
        }
        text.push('\n');
    }
    fs::write(path, text)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
