//! Deterministic text output: JSON with fixed-width floats and small CSV
//! helpers.
//!
//! Every float is written with 17 significant digits, which pins down an
//! f64 uniquely; reparsing a file written here reproduces the bits, and
//! repeated runs with the same inputs produce identical bytes.

use std::io::Write as _;

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

/// 17-significant-digit scientific form, enough to round-trip any f64.
#[must_use]
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde_json formatter that writes all floats through [`fmt_f64`].
#[derive(Clone, Copy, Debug, Default)]
pub struct SigFigFormatter;

impl Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        writer.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        self.write_f64(writer, f64::from(value))
    }
}

/// Serialize to JSON with fixed-width floats and a trailing newline.
/// Output is compact; the formatter's float handling is the only override.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Serialization(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Serialization(e.to_string()))
}

/// One CSV line; numeric cells should already be formatted with
/// [`fmt_f64`]. Cells here never need quoting.
#[must_use]
pub fn csv_line(cells: &[String]) -> String {
    let mut line = cells.join(",");
    line.push('\n');
    line
}

/// Assemble a CSV table with a header row.
pub fn csv_table<I>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len(), "csv row width mismatch");
        out.push_str(&csv_line(&row));
    }
    out
}

/// Write text to a file, creating parent directories as needed.
pub fn write_text(path: &std::path::Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}
