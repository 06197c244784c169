//! CSV emission. Comma separation, one header row, '.' decimal point,
//! UTF-8, stable row order.

use std::fs;
use std::path::Path;

use dmatrack_core::Result;

/// Write a CSV file with the given header and pre-formatted rows.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row.as_ref());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Format a float for CSV output. Rust's `Display` for `f64` never uses
/// scientific notation or locale-dependent separators.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv(&path, "a,b", ["1,2", "3,4"]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,2\n3,4\n");
    }

    #[test]
    fn float_formatting_uses_dot_and_no_exponent() {
        assert_eq!(fmt_f64(1.5), "1.5");
        assert_eq!(fmt_f64(0.000000001), "0.000000001");
        assert_eq!(fmt_f64(-2.0), "-2");
    }
}
